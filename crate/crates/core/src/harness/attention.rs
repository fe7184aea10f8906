use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loso::Reproducibility;
use super::train::predict_segments;
use crate::data::{ActivityType, Cohort, Label, Segment};
use crate::error::{Error, Result};
use crate::model::{Model, Variant};
use crate::util::write_atomic;

pub const ATTENTION_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub subject: String,
    pub cohort: Cohort,
    pub instance_id: String,
    pub start: usize,
    pub activity: ActivityType,
    pub predicted: Label,
    pub truth: Label,
    /// Predicted probability of the protective class.
    pub probability: f64,
    /// One weight per body part; absent for variants without body attention.
    pub body_summary: Option<Vec<f64>>,
    /// Parts × timesteps.
    pub temporal: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quartiles {
    /// Linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Quartiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Quartiles {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub cohort: Cohort,
    pub activity: ActivityType,
    pub segments: usize,
    /// Per body part, over the group's segments.
    pub body_summary: Vec<Quartiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    pub schema_version: u32,
    pub variant: Variant,
    pub records: Vec<AttentionRow>,
    pub groups: Vec<GroupSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproducibility: Option<Reproducibility>,
}

/// Attention of every segment plus per (cohort, activity) quartiles of the body summary.
pub fn attention_records(model: &Model, segments: &[Segment]) -> Result<AttentionExport> {
    if !model.variant().has_attention() {
        return Err(Error::usage(format!("{} has no attention to export", model.variant())));
    }
    let preds = predict_segments(model, segments)?;
    let records: Vec<AttentionRow> = preds
        .into_iter()
        .zip(segments)
        .map(|(p, s)| {
            let predicted = Label::from_class(p.class());
            let probability = p.probs[Label::Protective.class()];
            let rec = p.attention.expect("attention variants record attention");
            AttentionRow {
                subject: s.subject_id.clone(),
                cohort: s.cohort,
                instance_id: s.instance_id.clone(),
                start: s.start,
                activity: s.activity,
                predicted,
                truth: s.label,
                probability,
                body_summary: rec.body_summary,
                temporal: (0..rec.temporal.rows()).map(|r| rec.temporal.row(r).to_vec()).collect(),
            }
        })
        .collect();

    let mut grouped: BTreeMap<(Cohort, ActivityType), Vec<&AttentionRow>> = BTreeMap::new();
    for r in &records {
        grouped.entry((r.cohort, r.activity)).or_default().push(r);
    }
    let groups = grouped
        .into_iter()
        .map(|((cohort, activity), rows)| {
            let parts = rows[0].body_summary.as_ref().map_or(0, Vec::len);
            let body_summary = (0..parts)
                .filter_map(|k| {
                    let vals: Vec<f64> = rows.iter().filter_map(|r| r.body_summary.as_ref().map(|b| b[k])).collect();
                    Quartiles::of(&vals)
                })
                .collect();
            GroupSummary { cohort, activity, segments: rows.len(), body_summary }
        })
        .collect();
    Ok(AttentionExport { schema_version: ATTENTION_SCHEMA_VERSION, variant: model.variant(), records, groups, reproducibility: None })
}

pub fn export_attention(model: &Model, segments: &[Segment], out: &Path) -> Result<AttentionExport> {
    let export = attention_records(model, segments)?;
    write_export(&export, out)?;
    Ok(export)
}

pub fn write_export(export: &AttentionExport, out: &Path) -> Result<()> {
    let mut text = serde_json::to_string(export).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_atomic(out, text.as_bytes())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub segments: usize,
    pub planted_mean: f64,
    pub other_mean: f64,
    pub ratio: f64,
}

/// Mean body-summary weight on planted vs. other parts over correctly
/// classified protective segments. `planted` maps subject to 0-based parts.
pub fn localization<'a>(
    records: impl IntoIterator<Item = &'a AttentionRow>,
    planted: &BTreeMap<String, BTreeSet<usize>>,
) -> Option<Localization> {
    let (mut ps, mut pn, mut os, mut on, mut segs) = (0.0, 0usize, 0.0, 0usize, 0usize);
    for r in records {
        if r.truth != Label::Protective || r.predicted != Label::Protective {
            continue;
        }
        let (Some(b), Some(parts)) = (&r.body_summary, planted.get(&r.subject)) else {
            continue;
        };
        segs += 1;
        for (k, &w) in b.iter().enumerate() {
            if parts.contains(&k) {
                ps += w;
                pn += 1;
            } else {
                os += w;
                on += 1;
            }
        }
    }
    (pn > 0 && on > 0).then(|| {
        let (planted_mean, other_mean) = (ps / pn as f64, os / on as f64);
        Localization { segments: segs, planted_mean, other_mean, ratio: planted_mean / other_mean }
    })
}
