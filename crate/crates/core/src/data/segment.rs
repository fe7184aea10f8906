use serde::{Deserialize, Serialize};

use super::instance::{ActivityType, Cohort, MovementInstance, RATERS};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    NonProtective,
    Protective,
}

impl Label {
    pub fn class(self) -> usize {
        match self {
            Label::NonProtective => 0,
            Label::Protective => 1,
        }
    }

    pub fn from_class(c: usize) -> Label {
        if c == 1 {
            Label::Protective
        } else {
            Label::NonProtective
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Provenance {
    Original,
    Gauss { sigma: f64 },
    Dropout { p: f64 },
}

impl Provenance {
    pub fn is_original(&self) -> bool {
        matches!(self, Provenance::Original)
    }
}

/// A fixed-length window of one activity block.
///
/// Matrix columns are grouped by body part: column `2k` is the angle of part `k`
/// and `2k + 1` its energy, so a row reads `[part][feature]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub matrix: Matrix,
    pub label: Label,
    pub subject_id: String,
    pub cohort: Cohort,
    pub instance_id: String,
    pub activity: ActivityType,
    /// Absolute sample index of row 0 within the instance.
    pub start: usize,
    pub unpadded_len: usize,
    pub provenance: Provenance,
    /// Set once a normalizer has been applied.
    pub normalized: bool,
}

impl Segment {
    pub fn parts(&self) -> usize {
        self.matrix.cols() / 2
    }

    /// Padded tail rows are all exactly zero.
    pub fn padding_is_zero(&self) -> bool {
        (self.unpadded_len..self.matrix.rows()).all(|t| self.matrix.row(t).iter().all(|&v| v == 0.0))
    }

    /// Stable identity used to derive per-segment random streams.
    pub fn key(&self) -> String {
        format!("{}@{}", self.instance_id, self.start)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub window: usize,
    pub overlap: f64,
    /// Minimum fraction of real samples for a window to be emitted.
    pub min_fill: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig { window: 180, overlap: 0.75, min_fill: 0.5 }
    }
}

impl SegmentConfig {
    pub fn stride(&self) -> usize {
        ((self.window as f64 * (1.0 - self.overlap)).round() as usize).max(1)
    }

    fn min_real(&self) -> usize {
        (self.window as f64 * self.min_fill).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::usage("segment window must be positive"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::usage(format!("overlap {} must lie in [0, 1)", self.overlap)));
        }
        if !(0.0..=1.0).contains(&self.min_fill) {
            return Err(Error::usage(format!("min_fill {} must lie in [0, 1]", self.min_fill)));
        }
        Ok(())
    }

    /// `(offset, unpadded_len)` of every window emitted from a block of `len` samples.
    pub fn window_starts(&self, len: usize) -> Vec<(usize, usize)> {
        if len == 0 {
            return Vec::new();
        }
        let min_real = self.min_real();
        if len < min_real {
            return vec![(0, len)];
        }
        (0..len)
            .step_by(self.stride())
            .map(|s| (s, (len - s).min(self.window)))
            .filter(|&(_, real)| real >= min_real)
            .collect()
    }
}

/// 2-of-4 per-sample vote, then the segment is protective when at least half of
/// its real samples are.
pub fn label_segment(flags: &[[u8; RATERS]], unpadded_len: usize) -> Label {
    let n = unpadded_len.min(flags.len());
    if n == 0 {
        return Label::NonProtective;
    }
    let votes = flags[..n]
        .iter()
        .filter(|f| f.iter().filter(|&&x| x != 0).count() >= 2)
        .count();
    if 2 * votes >= n {
        Label::Protective
    } else {
        Label::NonProtective
    }
}

pub fn segment_instance(inst: &MovementInstance, cfg: &SegmentConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let c = inst.parts();
    let mut out = Vec::new();
    let mut spans = inst.activities.clone();
    spans.sort_by_key(|s| s.start);
    for span in spans {
        for (offset, real) in cfg.window_starts(span.len()) {
            let start = span.start + offset;
            let mut m = Matrix::zeros(cfg.window, 2 * c);
            for r in 0..real {
                let src = inst.frames.row(start + r);
                let dst = m.row_mut(r);
                for k in 0..c {
                    dst[2 * k] = src[k];
                    dst[2 * k + 1] = src[c + k];
                }
            }
            let label = match inst.cohort {
                Cohort::Healthy => Label::NonProtective,
                Cohort::Patient => label_segment(&inst.raters[start..start + real], real),
            };
            out.push(Segment {
                matrix: m,
                label,
                subject_id: inst.subject_id.clone(),
                cohort: inst.cohort,
                instance_id: inst.id.clone(),
                activity: span.kind,
                start,
                unpadded_len: real,
                provenance: Provenance::Original,
                normalized: false,
            });
        }
    }
    Ok(out)
}
