use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub df: f64,
    pub mean_difference: f64,
    /// Differences had zero variance but a nonzero mean: `t` is infinite and `p` is 0.
    pub degenerate: bool,
}

/// Paired t-test on `a[i] − b[i]`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::usage(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::usage("paired t-test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs() {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, p: 1.0, df, mean_difference: 0.0, degenerate: false }
        } else {
            TTest { t: mean.signum() * f64::INFINITY, p: 0.0, df, mean_difference: mean, degenerate: true }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::usage(e.to_string()))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTest { t, p, df, mean_difference: mean, degenerate: false })
}

/// Bonferroni-adjusted p-value for `comparisons` tests.
pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons.max(1) as f64).min(1.0)
}
