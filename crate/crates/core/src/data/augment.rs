use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::segment::{Provenance, Segment};
use crate::error::{Error, Result};
use crate::rng::{hash_str, stream, tag, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentKind {
    /// Additive white noise on the real rows, in normalized units.
    Gauss(f64),
    /// Zero both columns of each (timestep, part) pair with this probability.
    Dropout(f64),
}

impl AugmentKind {
    pub fn validate(self) -> Result<()> {
        match self {
            AugmentKind::Gauss(s) if !(s >= 0.0 && s.is_finite()) => {
                Err(Error::usage(format!("gaussian sigma {s} must be non-negative")))
            }
            AugmentKind::Dropout(p) if !(0.0..=1.0).contains(&p) => {
                Err(Error::usage(format!("dropout probability {p} must lie in [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    fn provenance(self) -> Provenance {
        match self {
            AugmentKind::Gauss(sigma) => Provenance::Gauss { sigma },
            AugmentKind::Dropout(p) => Provenance::Dropout { p },
        }
    }
}

pub fn augment(seg: &Segment, kind: AugmentKind, rng: &mut Rng) -> Result<Segment> {
    kind.validate()?;
    if !seg.normalized {
        return Err(Error::usage("augmentation expects a normalized segment"));
    }
    if !seg.provenance.is_original() {
        return Err(Error::usage("augmentation input must be an original segment"));
    }
    let mut out = seg.clone();
    match kind {
        AugmentKind::Gauss(sigma) => {
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::usage(e.to_string()))?;
                for t in 0..out.unpadded_len {
                    for v in out.matrix.row_mut(t) {
                        *v += normal.sample(rng);
                    }
                }
            }
        }
        AugmentKind::Dropout(p) => {
            let parts = out.parts();
            for t in 0..out.unpadded_len {
                let row = out.matrix.row_mut(t);
                for k in 0..parts {
                    if rng.random::<f64>() < p {
                        row[2 * k] = 0.0;
                        row[2 * k + 1] = 0.0;
                    }
                }
            }
        }
    }
    out.provenance = kind.provenance();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub gauss_sigmas: Vec<f64>,
    pub dropout_ps: Vec<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { enabled: true, gauss_sigmas: vec![0.05, 0.1, 0.15], dropout_ps: vec![0.05, 0.1, 0.15] }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig { enabled: false, ..AugmentConfig::default() }
    }

    pub fn kinds(&self) -> Vec<AugmentKind> {
        if !self.enabled {
            return Vec::new();
        }
        self.gauss_sigmas
            .iter()
            .map(|&s| AugmentKind::Gauss(s))
            .chain(self.dropout_ps.iter().map(|&p| AugmentKind::Dropout(p)))
            .collect()
    }

    pub fn multiplier(&self) -> usize {
        1 + self.kinds().len()
    }

    pub fn validate(&self) -> Result<()> {
        self.kinds().into_iter().try_for_each(AugmentKind::validate)
    }
}

/// Each original followed by its augmented copies. Every copy draws from a
/// stream keyed by the segment identity, so the output does not depend on
/// scheduling or on which other segments are present.
pub fn expand_training(segments: &[Segment], cfg: &AugmentConfig, seed: u64) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let kinds = cfg.kinds();
    let groups: Vec<Vec<Segment>> = segments
        .par_iter()
        .map(|seg| {
            let mut group = Vec::with_capacity(kinds.len() + 1);
            group.push(seg.clone());
            let id = hash_str(&seg.key());
            for (i, &kind) in kinds.iter().enumerate() {
                let mut rng = stream(seed, &[tag::AUGMENT, id, i as u64]);
                group.push(augment(seg, kind, &mut rng)?);
            }
            Ok(group)
        })
        .collect::<Result<_>>()?;
    Ok(groups.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::instance::{ActivityType, Cohort};
    use crate::data::segment::Label;
    use crate::nn::Matrix;

    fn seg(start: usize, real: usize) -> Segment {
        let mut m = Matrix::zeros(30, 26);
        for t in 0..real {
            for c in 0..26 {
                m.set(t, c, 1.0 + 0.1 * c as f64 + 0.01 * t as f64);
            }
        }
        Segment {
            matrix: m,
            label: Label::Protective,
            subject_id: "P01".into(),
            cohort: Cohort::Patient,
            instance_id: "P01_T1".into(),
            activity: ActivityType::SitToStand,
            start,
            unpadded_len: real,
            provenance: Provenance::Original,
            normalized: true,
        }
    }

    #[test]
    fn identities() {
        let s = seg(0, 20);
        let mut rng = stream(0, &[]);
        assert_eq!(augment(&s, AugmentKind::Gauss(0.0), &mut rng).unwrap().matrix, s.matrix);
        assert_eq!(augment(&s, AugmentKind::Dropout(0.0), &mut rng).unwrap().matrix, s.matrix);
        let gone = augment(&s, AugmentKind::Dropout(1.0), &mut rng).unwrap();
        assert!(gone.matrix.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_touches_real_rows_only() {
        let s = seg(0, 12);
        let mut rng = stream(3, &[]);
        let g = augment(&s, AugmentKind::Gauss(0.1), &mut rng).unwrap();
        assert!(g.padding_is_zero());
        assert_ne!(g.matrix.row(0), s.matrix.row(0));
        assert_eq!(g.label, s.label);
        assert_eq!(g.subject_id, s.subject_id);
        assert_eq!(g.activity, s.activity);
        assert_eq!(g.unpadded_len, s.unpadded_len);
        assert_eq!(g.provenance, Provenance::Gauss { sigma: 0.1 });
    }

    #[test]
    fn dropout_zeroes_whole_parts() {
        let s = seg(0, 30);
        let mut rng = stream(4, &[]);
        let d = augment(&s, AugmentKind::Dropout(0.5), &mut rng).unwrap();
        let mut dropped = 0;
        for t in 0..30 {
            for k in 0..13 {
                let (a, e) = (d.matrix.get(t, 2 * k), d.matrix.get(t, 2 * k + 1));
                if a == 0.0 || e == 0.0 {
                    assert!(a == 0.0 && e == 0.0, "half-dropped part at ({t}, {k})");
                    dropped += 1;
                }
            }
        }
        assert!(dropped > 100 && dropped < 290, "{dropped}");
    }

    #[test]
    fn sevenfold_and_order_free() {
        let segs: Vec<_> = (0..5).map(|i| seg(i * 45, 20 + i)).collect();
        let cfg = AugmentConfig::default();
        let out = expand_training(&segs, &cfg, 11).unwrap();
        assert_eq!(out.len(), 7 * segs.len());
        assert!(out.iter().all(|s| s.padding_is_zero()));
        let rev: Vec<_> = segs.iter().rev().cloned().collect();
        let out_rev = expand_training(&rev, &cfg, 11).unwrap();
        for group in out.chunks(7) {
            let other = out_rev.chunks(7).find(|g| g[0].start == group[0].start).unwrap();
            assert_eq!(group, other);
        }
        assert_eq!(expand_training(&segs, &AugmentConfig::disabled(), 11).unwrap(), segs);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = stream(0, &[]);
        let s = seg(0, 5);
        assert!(augment(&s, AugmentKind::Gauss(-0.1), &mut rng).is_err());
        assert!(augment(&s, AugmentKind::Dropout(1.5), &mut rng).is_err());
        let mut raw = s.clone();
        raw.normalized = false;
        assert!(augment(&raw, AugmentKind::Gauss(0.1), &mut rng).is_err());
    }
}
