//! Temporal and bodily attention blocks.
//!
//! Temporal attention scores each timestep of one part's hidden-state block
//! with a 1x1 convolution, normalises the scores over time and pools the
//! block into a single `K`-vector. Body attention maps every hidden row of
//! the pooled `K x C` matrix through `tanh(fc1)` then `softmax(fc2)` along
//! the part axis and rescales the pooled states elementwise.

use serde::{Deserialize, Serialize};

use super::layers::Dropout;
use crate::error::{Error, Result};
use crate::model::layers::{stack_forward, LstmSlot};
use crate::nn::matrix::Matrix;
use crate::nn::ops::{dot, softmax_in_place};
use crate::nn::{Conv1x1Params, DenseParams, LstmLayerParams, Mode};
use crate::rng::Rng;

/// Attention scores emitted by one forward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    /// One row per temporal-attention stream (13 parts, or 1 for the input-level variant), `T` columns.
    pub temporal: Matrix,
    /// Body scores: `K x C` for the attention network, one row per input feature for the input-level variant.
    pub body: Option<Matrix>,
    /// Mean of the body-score rows: one value per part.
    pub body_summary: Option<Vec<f64>>,
}

pub(crate) fn row_means(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    let n = m.rows().max(1) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Softmax over time of `scores` (in place), then `pooled = Σ_t a_t h_t`.
///
/// `h` is laid out `[t][lane][k]`; only `lane` is read.
pub(crate) fn attend_lane(scores: &mut [f64], h: &[f64], lanes: usize, lane: usize, k: usize, pooled: &mut [f64]) {
    softmax_in_place(scores);
    pooled.fill(0.0);
    for (t, &a) in scores.iter().enumerate() {
        let ht = &h[(t * lanes + lane) * k..(t * lanes + lane + 1) * k];
        for (p, &v) in pooled.iter_mut().zip(ht) {
            *p += a * v;
        }
    }
}

/// Backward of [`attend_lane`]: given `dpooled`, adds `∂/∂h` into `dh` and
/// returns the gradient w.r.t. the pre-softmax scores.
pub(crate) fn attend_lane_backward(
    a: &[f64],
    h: &[f64],
    lanes: usize,
    lane: usize,
    k: usize,
    dpooled: &[f64],
    dh: &mut [f64],
) -> Vec<f64> {
    let mut da = vec![0.0; a.len()];
    for (t, &at) in a.iter().enumerate() {
        let off = (t * lanes + lane) * k;
        da[t] = dot(&h[off..off + k], dpooled);
        for (d, &g) in dh[off..off + k].iter_mut().zip(dpooled) {
            *d += at * g;
        }
    }
    let mut ds = vec![0.0; a.len()];
    crate::nn::ops::softmax_backward(a, &da, &mut ds);
    ds
}

/// One row of body attention. Writes `u = tanh(fc1 v)`, `b = softmax(fc2 u)`.
pub(crate) fn body_row(fc1: &DenseParams<'_>, fc2: &DenseParams<'_>, v: &[f64], u: &mut [f64], b: &mut [f64]) {
    fc1.apply(v, u);
    u.iter_mut().for_each(|x| *x = x.tanh());
    fc2.apply(u, b);
    softmax_in_place(b);
}

fn check_dense(p: &DenseParams<'_>, c: usize, which: &str) -> Result<()> {
    if p.inputs != c || p.outputs != c {
        return Err(Error::usage(format!(
            "{which} must map {c} parts to {c} parts, got {}->{}",
            p.inputs, p.outputs
        )));
    }
    Ok(())
}

/// Temporal attention over one part's `T x K` block: returns `(a, pooled)`.
pub fn temporal_attention(h: &Matrix, conv: &Conv1x1Params<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = crate::nn::conv1x1_time_forward(h, conv)?;
    let mut pooled = vec![0.0; h.cols()];
    attend_lane(&mut a, h.as_slice(), 1, 0, h.cols(), &mut pooled);
    Ok((a, pooled))
}

/// Body attention over pooled states `K x C`: returns `(B, attenH)`, both `K x C`.
pub fn body_attention(h_pool: &Matrix, fc1: &DenseParams<'_>, fc2: &DenseParams<'_>) -> Result<(Matrix, Matrix)> {
    let c = h_pool.cols();
    check_dense(fc1, c, "fc1")?;
    check_dense(fc2, c, "fc2")?;
    let mut scores = Matrix::zeros(h_pool.rows(), c);
    let mut atten = Matrix::zeros(h_pool.rows(), c);
    let mut u = vec![0.0; c];
    for k in 0..h_pool.rows() {
        let v = h_pool.row(k);
        body_row(fc1, fc2, v, &mut u, scores.row_mut(k));
        for ((o, &b), &x) in atten.row_mut(k).iter_mut().zip(scores.row(k)).zip(v) {
            *o = b * x;
        }
    }
    Ok((scores, atten))
}

/// Runs the shared LSTM stack independently over every part's `T x F` slice.
///
/// `segment` is `T x (C·F)` with columns grouped per part.
pub fn encode_parts(
    segment: &Matrix,
    layers: &[LstmLayerParams<'_>],
    features_per_part: usize,
    dropout_p: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Vec<Matrix>> {
    let first = layers.first().ok_or_else(|| Error::usage("encoder needs at least one layer"))?;
    if features_per_part == 0 || segment.cols() % features_per_part != 0 || first.input_dim != features_per_part {
        return Err(Error::usage(format!(
            "segment with {} columns cannot be split into parts of {} features for a {}-input encoder",
            segment.cols(),
            features_per_part,
            first.input_dim
        )));
    }
    for w in layers.windows(2) {
        if w[1].input_dim != w[0].hidden_dim {
            return Err(Error::usage("encoder layers do not chain"));
        }
    }
    let parts = segment.cols() / features_per_part;
    let steps = segment.rows();
    // Rebuild a flat parameter vector so the slot-based stack can run.
    let mut flat = Vec::new();
    let mut slots = Vec::new();
    let mut store = crate::nn::ParamStore::new();
    for (i, l) in layers.iter().enumerate() {
        let w = store.alloc(format!("l{i}.w"), l.input_dim + l.hidden_dim, 4 * l.hidden_dim);
        let b = store.alloc(format!("l{i}.b"), 1, 4 * l.hidden_dim);
        flat.extend_from_slice(l.w);
        flat.extend_from_slice(l.b);
        slots.push(LstmSlot::from_range(l.input_dim, l.hidden_dim, w.start..b.end));
    }
    let mut drop = match mode {
        Mode::Train => Dropout::active(dropout_p, rng.clone()),
        Mode::Infer => Dropout::inactive(),
    };
    let tape = stack_forward(&slots, &flat, segment.as_slice(), steps, parts, &mut drop);
    let k = layers.last().map_or(0, |l| l.hidden_dim);
    (0..parts)
        .map(|c| {
            let data = (0..steps)
                .flat_map(|t| tape.out[(t * parts + c) * k..(t * parts + c + 1) * k].iter().copied())
                .collect();
            Matrix::from_vec(steps, k, data)
        })
        .collect()
}
