use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Outcome of comparing analytic gradients to central differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the parameter with the largest relative error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Probes every parameter with a central difference of step `h`.
///
/// `loss` must be a deterministic function of the full parameter vector
/// (run it with fixed dropout masks or in inference mode). Probes are
/// independent, so they run in parallel; the report does not depend on
/// scheduling.
pub fn grad_check<F>(params: &[f64], analytic: &[f64], loss: F, h: f64, tol: f64) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert_eq!(params.len(), analytic.len(), "one analytic gradient per parameter");
    let errors: Vec<(f64, f64)> = (0..params.len())
        .into_par_iter()
        .map(|i| {
            let mut p = params.to_vec();
            p[i] = params[i] + h;
            let up = loss(&p);
            p[i] = params[i] - h;
            let down = loss(&p);
            let numeric = (up - down) / (2.0 * h);
            (relative_error(analytic[i], numeric), numeric)
        })
        .collect();
    let (worst_index, &(max_rel_error, numeric)) = errors
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .unwrap_or((0, &(0.0, 0.0)));
    GradCheckReport {
        max_rel_error,
        worst_index,
        analytic: analytic.get(worst_index).copied().unwrap_or(0.0),
        numeric,
        checked: params.len(),
        passed: max_rel_error < tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::{cross_entropy_loss, dense_forward, Activation, DenseParams};

    #[test]
    fn zero_gradient_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        let r = grad_check(&[1.0, 2.0], &[0.0, 4.0], |p| p[1] * p[1], 1e-5, 1e-8);
        assert!(r.max_rel_error < 1e-9);
    }

    #[test]
    fn dense_softmax_classifier_is_exact() {
        // Analytic gradient of CE(softmax(Wᵀx + b)) is (p − y) xᵀ.
        let x = [0.5, -1.5, 2.0];
        let params: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let loss = |p: &[f64]| {
            let d = DenseParams::new(3, 2, &p[..6], &p[6..]).unwrap();
            cross_entropy_loss(&dense_forward(&x, &d, Activation::Softmax).unwrap(), 1).unwrap()
        };
        let d = DenseParams::new(3, 2, &params[..6], &params[6..]).unwrap();
        let probs = dense_forward(&x, &d, Activation::Softmax).unwrap();
        let dz = [probs[0], probs[1] - 1.0];
        let mut grad = vec![0.0; 8];
        for i in 0..3 {
            for j in 0..2 {
                grad[i * 2 + j] = x[i] * dz[j];
            }
        }
        grad[6] = dz[0];
        grad[7] = dz[1];
        let r = grad_check(&params, &grad, loss, 1e-5, 1e-8);
        assert!(r.passed, "{r:?}");
    }
}
