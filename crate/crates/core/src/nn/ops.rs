//! Elementwise functions and the feed-forward layers (dense, 1x1 temporal conv).
//!
//! Layers read their weights through borrowed views so the same code serves
//! the flat parameter store of a model and ad-hoc slices in tests.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `tanh` through a single `exp`, about three times cheaper than libm's.
/// The error is absolute, at rounding level.
#[inline]
pub(crate) fn tanh_fast(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::usage("softmax of an empty vector"));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Gradient of the logits given the softmax output `p` and the gradient `dp`
/// of its outputs: `p ⊙ (dp − ⟨p, dp⟩)`.
pub(crate) fn softmax_backward(p: &[f64], dp: &[f64], dz: &mut [f64]) {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    for ((z, &pi), &dpi) in dz.iter_mut().zip(p).zip(dp) {
        *z = pi * (dpi - dot);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Tanh,
    Softmax,
}

/// Fully-connected layer `y = act(Wᵀx + b)`, `W` stored `inputs x outputs` row-major.
#[derive(Clone, Copy, Debug)]
pub struct DenseParams<'a> {
    pub inputs: usize,
    pub outputs: usize,
    pub w: &'a [f64],
    pub b: &'a [f64],
}

impl<'a> DenseParams<'a> {
    pub fn new(inputs: usize, outputs: usize, w: &'a [f64], b: &'a [f64]) -> Result<Self> {
        if w.len() != inputs * outputs || b.len() != outputs {
            return Err(Error::usage(format!(
                "dense {inputs}->{outputs} expects {}+{} params, got {}+{}",
                inputs * outputs,
                outputs,
                w.len(),
                b.len()
            )));
        }
        Ok(DenseParams { inputs, outputs, w, b })
    }

    pub const fn count(inputs: usize, outputs: usize) -> usize {
        inputs * outputs + outputs
    }

    pub(crate) fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(self.b);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w[i * self.outputs..(i + 1) * self.outputs];
            for (yj, &wij) in y.iter_mut().zip(row) {
                *yj += xi * wij;
            }
        }
    }

    /// Accumulates `dW += x dyᵀ`, `db += dy` and, when requested, writes `dx = W dy`.
    pub(crate) fn backward(&self, x: &[f64], dy: &[f64], gw: &mut [f64], gb: &mut [f64], dx: Option<&mut [f64]>) {
        for (g, &d) in gb.iter_mut().zip(dy) {
            *g += d;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let grow = &mut gw[i * self.outputs..(i + 1) * self.outputs];
            for (g, &d) in grow.iter_mut().zip(dy) {
                *g += xi * d;
            }
        }
        if let Some(dx) = dx {
            for (i, dxi) in dx.iter_mut().enumerate() {
                let row = &self.w[i * self.outputs..(i + 1) * self.outputs];
                *dxi = row.iter().zip(dy).map(|(w, d)| w * d).sum();
            }
        }
    }
}

pub fn dense_forward(x: &[f64], p: &DenseParams<'_>, activation: Activation) -> Result<Vec<f64>> {
    if x.len() != p.inputs {
        return Err(Error::usage(format!(
            "dense layer expects {} inputs, got {}",
            p.inputs,
            x.len()
        )));
    }
    let mut y = vec![0.0; p.outputs];
    p.apply(x, &mut y);
    match activation {
        Activation::None => {}
        Activation::Tanh => y.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Softmax => softmax_in_place(&mut y),
    }
    Ok(y)
}

/// 1x1 convolution over a `T x K` hidden-state block: one score per timestep.
#[derive(Clone, Copy, Debug)]
pub struct Conv1x1Params<'a> {
    pub w: &'a [f64],
    pub b: f64,
}

impl<'a> Conv1x1Params<'a> {
    pub const fn count(k: usize) -> usize {
        k + 1
    }
}

pub fn conv1x1_time_forward(h: &Matrix, p: &Conv1x1Params<'_>) -> Result<Vec<f64>> {
    if h.cols() != p.w.len() {
        return Err(Error::usage(format!(
            "1x1 conv has {} weights but hidden block has {} columns",
            p.w.len(),
            h.cols()
        )));
    }
    Ok((0..h.rows())
        .map(|t| dot(h.row(t), p.w) + p.b)
        .collect())
}

/// `−ln p[label]`, with the probability clamped to at least `1e-12`.
pub fn cross_entropy_loss(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs
        .get(label)
        .ok_or_else(|| Error::usage(format!("label {label} out of range for {} classes", probs.len())))?;
    Ok(-p.max(1e-12).ln())
}

/// Cross-entropy computed from logits, `ln C + centered_cross_entropy`.
pub fn cross_entropy_from_logits(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::usage(format!("label {label} out of range for {} classes", logits.len())));
    }
    Ok((logits.len() as f64).ln() + centered_cross_entropy(logits, label))
}

/// `−ln p_label − ln C`, evaluated as `ln1p(mean(expm1(z_i − z_label)))`.
///
/// Near the uniform prediction the value is small and keeps full relative
/// precision, which finite-difference checks depend on.
pub(crate) fn centered_cross_entropy(logits: &[f64], label: usize) -> f64 {
    let zy = logits[label];
    let spread = logits.iter().map(|z| z - zy).fold(f64::NEG_INFINITY, f64::max);
    if spread > 30.0 {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        return lse - zy - (logits.len() as f64).ln();
    }
    let mean = logits.iter().map(|z| (z - zy).exp_m1()).sum::<f64>() / logits.len() as f64;
    mean.ln_1p()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
