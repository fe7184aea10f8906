use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::segment::Segment;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-column z-score statistics over the real rows of a training fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Subjects whose rows entered the statistics.
    pub fitted_subjects: BTreeSet<String>,
    pub rows: usize,
}

impl Normalizer {
    pub fn fit(segments: &[Segment]) -> Result<Normalizer> {
        let first = segments.first().ok_or_else(|| Error::usage("cannot fit a normalizer on no segments"))?;
        let cols = first.matrix.cols();
        let mut sum = vec![0.0; cols];
        let mut rows = 0usize;
        for s in segments {
            if s.matrix.cols() != cols {
                return Err(Error::usage("segments disagree on column count"));
            }
            for t in 0..s.unpadded_len {
                for (acc, v) in sum.iter_mut().zip(s.matrix.row(t)) {
                    *acc += v;
                }
            }
            rows += s.unpadded_len;
        }
        if rows == 0 {
            return Err(Error::usage("cannot fit a normalizer on zero real rows"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / rows as f64).collect();
        let mut sq = vec![0.0; cols];
        for s in segments {
            for t in 0..s.unpadded_len {
                for ((acc, v), m) in sq.iter_mut().zip(s.matrix.row(t)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = sq.iter().map(|q| (q / rows as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(Normalizer {
            mean,
            std,
            fitted_subjects: segments.iter().map(|s| s.subject_id.clone()).collect(),
            rows,
        })
    }

    pub fn apply_in_place(&self, seg: &mut Segment) -> Result<()> {
        self.check(seg)?;
        for t in 0..seg.unpadded_len {
            for ((v, m), s) in seg.matrix.row_mut(t).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        seg.normalized = true;
        Ok(())
    }

    pub fn apply(&self, seg: &Segment) -> Result<Segment> {
        let mut out = seg.clone();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn invert(&self, seg: &Segment) -> Result<Segment> {
        self.check(seg)?;
        let mut out = seg.clone();
        for t in 0..out.unpadded_len {
            for ((v, m), s) in out.matrix.row_mut(t).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out.normalized = false;
        Ok(out)
    }

    fn check(&self, seg: &Segment) -> Result<()> {
        if seg.matrix.cols() != self.mean.len() {
            return Err(Error::usage(format!(
                "normalizer has {} columns, segment has {}",
                self.mean.len(),
                seg.matrix.cols()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::instance::{ActivityType, Cohort};
    use crate::data::segment::{Label, Provenance};
    use crate::nn::Matrix;
    use crate::rng::stream;
    use rand::Rng as _;

    fn seg(rng: &mut crate::rng::Rng, real: usize, subject: &str) -> Segment {
        let mut m = Matrix::zeros(20, 4);
        for t in 0..real {
            m.set(t, 0, rng.random_range(-3.0..5.0));
            m.set(t, 1, 2.5);
            m.set(t, 2, rng.random_range(0.0..100.0));
            m.set(t, 3, rng.random::<f64>() * 1e-3);
        }
        Segment {
            matrix: m,
            label: Label::NonProtective,
            subject_id: subject.into(),
            cohort: Cohort::Healthy,
            instance_id: format!("{subject}_T1"),
            activity: ActivityType::Bend,
            start: 0,
            unpadded_len: real,
            provenance: Provenance::Original,
            normalized: false,
        }
    }

    #[test]
    fn fitted_set_is_standardized() {
        let mut rng = stream(1, &[]);
        let segs: Vec<_> = (0..8).map(|i| seg(&mut rng, 10 + i, if i % 2 == 0 { "A" } else { "B" })).collect();
        let norm = Normalizer::fit(&segs).unwrap();
        assert_eq!(norm.fitted_subjects.iter().collect::<Vec<_>>(), ["A", "B"]);
        let out: Vec<_> = segs.iter().map(|s| norm.apply(s).unwrap()).collect();
        let n = out.iter().map(|s| s.unpadded_len).sum::<usize>() as f64;
        for c in 0..4 {
            let vals: Vec<f64> = out.iter().flat_map(|s| (0..s.unpadded_len).map(move |t| s.matrix.get(t, c))).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "column {c} mean {mean}");
            if c == 1 {
                assert!(vals.iter().all(|&v| v == 0.0));
            } else {
                assert!((var.sqrt() - 1.0).abs() < 1e-6);
            }
        }
        for (s, o) in segs.iter().zip(&out) {
            assert!(o.padding_is_zero());
            let back = norm.invert(o).unwrap();
            for (a, b) in back.matrix.as_slice().iter().zip(s.matrix.as_slice()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn padding_does_not_enter_statistics() {
        let mut rng = stream(2, &[]);
        let a = seg(&mut rng, 5, "A");
        let mut padded = a.clone();
        padded.matrix = Matrix::zeros(40, 4);
        for t in 0..5 {
            padded.matrix.row_mut(t).copy_from_slice(a.matrix.row(t));
        }
        let n1 = Normalizer::fit(std::slice::from_ref(&a)).unwrap();
        let n2 = Normalizer::fit(&[padded]).unwrap();
        assert_eq!(n1.mean, n2.mean);
        assert_eq!(n1.std, n2.std);
    }

    #[test]
    fn empty_fit_is_an_error() {
        assert!(matches!(Normalizer::fit(&[]), Err(Error::Usage(_))));
    }
}
