//! Vanilla LSTM layers with exact backpropagation through time.
//!
//! Sequences are processed as `lanes` independent streams that share the
//! layer weights: the buffer layout is `[t][lane][feature]`, i.e. a
//! `(T·N) x D` row-major matrix. The per-part encoder of the attention
//! network runs its 13 body parts as 13 lanes of the same layer.
//!
//! Gate blocks are packed column-wise as `[input, forget, candidate, output]`
//! inside one `(D+K) x 4K` matrix whose first `D` rows multiply the input and
//! last `K` rows multiply the previous hidden state.

use rand::Rng as _;

use super::matrix::{gemm, Matrix};
use super::ops::{dot, sigmoid, tanh_fast};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug)]
pub struct LstmLayerParams<'a> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `(input_dim + hidden_dim) x 4·hidden_dim`, gate blocks `[i, f, g, o]`.
    pub w: &'a [f64],
    /// `4·hidden_dim`, same block order.
    pub b: &'a [f64],
}

impl<'a> LstmLayerParams<'a> {
    pub fn new(input_dim: usize, hidden_dim: usize, w: &'a [f64], b: &'a [f64]) -> Result<Self> {
        let g = 4 * hidden_dim;
        if w.len() != (input_dim + hidden_dim) * g || b.len() != g {
            return Err(Error::usage(format!(
                "lstm {input_dim}->{hidden_dim} expects {} weights and {g} biases, got {} and {}",
                (input_dim + hidden_dim) * g,
                w.len(),
                b.len()
            )));
        }
        Ok(LstmLayerParams { input_dim, hidden_dim, w, b })
    }

    pub const fn count(input_dim: usize, hidden_dim: usize) -> usize {
        4 * ((input_dim + hidden_dim) * hidden_dim + hidden_dim)
    }

    fn w_input(&self) -> &'a [f64] {
        &self.w[..self.input_dim * 4 * self.hidden_dim]
    }

    fn w_hidden(&self) -> &'a [f64] {
        &self.w[self.input_dim * 4 * self.hidden_dim..]
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmTape {
    pub steps: usize,
    pub lanes: usize,
    x: Vec<f64>,
    /// Post-activation gates `[i, f, g, o]`, `(T·N) x 4K`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Hidden states, `(T·N) x K`.
    pub h: Vec<f64>,
}

pub(crate) fn forward_lanes(p: &LstmLayerParams<'_>, x: &[f64], steps: usize, lanes: usize) -> LstmTape {
    let (d, k) = (p.input_dim, p.hidden_dim);
    let g = 4 * k;
    let rows = steps * lanes;
    debug_assert_eq!(x.len(), rows * d);

    let mut gates = Vec::with_capacity(rows * g);
    for _ in 0..rows {
        gates.extend_from_slice(p.b);
    }
    gemm(rows, d, g, x, false, p.w_input(), false, 1.0, &mut gates);

    let wh = p.w_hidden();
    let mut c = vec![0.0; rows * k];
    let mut tanh_c = vec![0.0; rows * k];
    let mut h = vec![0.0; rows * k];
    for t in 0..steps {
        for n in 0..lanes {
            let r = t * lanes + n;
            let pre = &mut gates[r * g..(r + 1) * g];
            if t > 0 {
                let hp = &h[(r - lanes) * k..(r - lanes + 1) * k];
                for (j, &hv) in hp.iter().enumerate() {
                    let wrow = &wh[j * g..(j + 1) * g];
                    for (q, &w) in pre.iter_mut().zip(wrow) {
                        *q += hv * w;
                    }
                }
            }
            for j in 0..k {
                let i = sigmoid(pre[j]);
                let f = sigmoid(pre[k + j]);
                let cand = tanh_fast(pre[2 * k + j]);
                let o = sigmoid(pre[3 * k + j]);
                pre[j] = i;
                pre[k + j] = f;
                pre[2 * k + j] = cand;
                pre[3 * k + j] = o;
                let c_prev = if t > 0 { c[(r - lanes) * k + j] } else { 0.0 };
                let ct = f * c_prev + i * cand;
                let tc = tanh_fast(ct);
                c[r * k + j] = ct;
                tanh_c[r * k + j] = tc;
                h[r * k + j] = o * tc;
            }
        }
    }
    LstmTape {
        steps,
        lanes,
        x: x.to_vec(),
        gates,
        c,
        tanh_c,
        h,
    }
}

/// Backpropagates `dh` (gradient w.r.t. every hidden state) through the layer.
///
/// Parameter gradients are accumulated into `gw`/`gb`; the input gradient is
/// returned when `want_dx` is set.
pub(crate) fn backward_lanes(
    p: &LstmLayerParams<'_>,
    tape: &LstmTape,
    dh: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let (d, k) = (p.input_dim, p.hidden_dim);
    let g = 4 * k;
    let (steps, lanes) = (tape.steps, tape.lanes);
    let rows = steps * lanes;
    let wh = p.w_hidden();

    let mut dpre = vec![0.0; rows * g];
    let mut dh_next = vec![0.0; lanes * k];
    let mut dc_next = vec![0.0; lanes * k];
    for t in (0..steps).rev() {
        for n in 0..lanes {
            let r = t * lanes + n;
            let gt = &tape.gates[r * g..(r + 1) * g];
            let dp = &mut dpre[r * g..(r + 1) * g];
            for j in 0..k {
                let (i, f, cand, o) = (gt[j], gt[k + j], gt[2 * k + j], gt[3 * k + j]);
                let tc = tape.tanh_c[r * k + j];
                let dht = dh[r * k + j] + dh_next[n * k + j];
                let d_o = dht * tc;
                let dc = dc_next[n * k + j] + dht * o * (1.0 - tc * tc);
                let c_prev = if t > 0 { tape.c[(r - lanes) * k + j] } else { 0.0 };
                dc_next[n * k + j] = dc * f;
                dp[j] = dc * cand * i * (1.0 - i);
                dp[k + j] = dc * c_prev * f * (1.0 - f);
                dp[2 * k + j] = dc * i * (1.0 - cand * cand);
                dp[3 * k + j] = d_o * o * (1.0 - o);
            }
            if t > 0 {
                let dh_lane = &mut dh_next[n * k..(n + 1) * k];
                for (j, v) in dh_lane.iter_mut().enumerate() {
                    *v = dot(dp, &wh[j * g..(j + 1) * g]);
                }
            }
        }
    }

    let (gw_x, gw_h) = gw.split_at_mut(d * g);
    gemm(d, rows, g, &tape.x, true, &dpre, false, 1.0, gw_x);
    if steps > 1 {
        let prev_rows = (steps - 1) * lanes;
        gemm(k, prev_rows, g, &tape.h[..prev_rows * k], true, &dpre[lanes * g..], false, 1.0, gw_h);
    }
    for r in 0..rows {
        for (acc, &v) in gb.iter_mut().zip(&dpre[r * g..(r + 1) * g]) {
            *acc += v;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0; rows * d];
        gemm(rows, g, d, &dpre, false, p.w_input(), true, 0.0, &mut dx);
        dx
    })
}

/// Inverted-dropout mask: kept units are scaled by `1/(1-p)`; `p = 1` yields all zeros.
pub(crate) fn dropout_mask(len: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    let scale = if p >= 1.0 { 0.0 } else { 1.0 / (1.0 - p) };
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
        .collect()
}

fn check_input(p: &LstmLayerParams<'_>, x: &Matrix) -> Result<()> {
    if x.cols() != p.input_dim {
        return Err(Error::usage(format!(
            "lstm layer expects {} input features, got {}",
            p.input_dim,
            x.cols()
        )));
    }
    Ok(())
}

/// Runs one layer over a `T x D` sequence from zero initial state; returns all hidden states.
pub fn lstm_forward(p: &LstmLayerParams<'_>, x: &Matrix) -> Result<Matrix> {
    check_input(p, x)?;
    let tape = forward_lanes(p, x.as_slice(), x.rows(), 1);
    Matrix::from_vec(x.rows(), p.hidden_dim, tape.h)
}

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Stacked layers with dropout after each one (train mode only).
pub fn lstm_stack_forward(
    layers: &[LstmLayerParams<'_>],
    x: &Matrix,
    dropout_p: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&dropout_p) {
        return Err(Error::usage(format!("dropout probability {dropout_p} outside [0, 1]")));
    }
    let mut cur = x.clone();
    for (idx, layer) in layers.iter().enumerate() {
        check_input(layer, &cur).map_err(|e| Error::usage(format!("layer {idx}: {e}")))?;
        let mut h = lstm_forward(layer, &cur)?;
        if mode == Mode::Train {
            let mask = dropout_mask(h.as_slice().len(), dropout_p, rng);
            h.as_mut_slice().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        }
        cur = h;
    }
    Ok(cur)
}

pub(crate) fn reverse_time(x: &[f64], steps: usize, row_len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for t in (0..steps).rev() {
        out.extend_from_slice(&x[t * row_len..(t + 1) * row_len]);
    }
    out
}

/// Forward pass over `x` concatenated with a backward pass over time-reversed `x`.
pub fn bidirectional_forward(fwd: &LstmLayerParams<'_>, bwd: &LstmLayerParams<'_>, x: &Matrix) -> Result<Matrix> {
    if fwd.input_dim != bwd.input_dim || fwd.hidden_dim != bwd.hidden_dim {
        return Err(Error::usage("forward and backward layers differ in shape"));
    }
    check_input(fwd, x)?;
    let steps = x.rows();
    let k = fwd.hidden_dim;
    let hf = forward_lanes(fwd, x.as_slice(), steps, 1).h;
    let xr = reverse_time(x.as_slice(), steps, x.cols());
    let hb = reverse_time(&forward_lanes(bwd, &xr, steps, 1).h, steps, k);
    let mut out = Matrix::zeros(steps, 2 * k);
    for t in 0..steps {
        let row = out.row_mut(t);
        row[..k].copy_from_slice(&hf[t * k..(t + 1) * k]);
        row[k..].copy_from_slice(&hb[t * k..(t + 1) * k]);
    }
    Ok(out)
}
