use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2×2 counts, `counts[truth][predicted]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; 2]; 2],
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut c = Confusion::default();
        for (truth, pred) in pairs {
            c.counts[truth][pred] += 1;
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, other: &Confusion) {
        for t in 0..2 {
            for p in 0..2 {
                self.counts[t][p] += other.counts[t][p];
            }
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (self.counts[0][0] + self.counts[1][1]) as f64 / total as f64
    }

    pub fn class_metrics(&self, class: usize) -> ClassMetrics {
        let other = 1 - class;
        let tp = self.counts[class][class];
        let fp = self.counts[other][class];
        let fn_ = self.counts[class][other];
        let ratio = |num: u64, den: u64| if den == 0 { if num == 0 { 1.0 } else { 0.0 } } else { num as f64 / den as f64 };
        // A class absent from both truth and prediction counts as perfectly handled.
        let (precision, recall, f1) = if tp + fp + fn_ == 0 {
            (1.0, 1.0, 1.0)
        } else {
            let p = if tp + fp == 0 { 0.0 } else { ratio(tp, tp + fp) };
            let r = if tp + fn_ == 0 { 0.0 } else { ratio(tp, tp + fn_) };
            (p, r, 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
        };
        ClassMetrics { precision, recall, f1, support: tp + fn_ }
    }

    pub fn macro_f1(&self) -> f64 {
        (self.class_metrics(0).f1 + self.class_metrics(1).f1) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub test_subject: String,
    pub segments: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Indexed by class: 0 non-protective, 1 protective.
    pub per_class: [ClassMetrics; 2],
    pub confusion: Confusion,
}

impl FoldReport {
    pub fn from_confusion(test_subject: impl Into<String>, confusion: Confusion) -> Result<FoldReport> {
        if confusion.total() == 0 {
            return Err(Error::usage("cannot report on an empty test set"));
        }
        Ok(FoldReport {
            test_subject: test_subject.into(),
            segments: confusion.total(),
            accuracy: confusion.accuracy(),
            macro_f1: confusion.macro_f1(),
            per_class: [confusion.class_metrics(0), confusion.class_metrics(1)],
            confusion,
        })
    }
}
