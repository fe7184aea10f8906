//! Comparison architectures without attention: stacked LSTM, bidirectional
//! LSTM and a convolutional front end followed by an LSTM.

use super::layers::{stack_backward, stack_forward, Builder, DenseSlot, Dropout, LstmSlot, StackTape};
use super::spec::{ModelSpec, CONV_FILTERS, CONV_KERNEL, CONV_POOL};
use crate::nn::lstm::{backward_lanes, forward_lanes, reverse_time, LstmTape};
use crate::nn::params::glorot_limit;
use std::ops::Range;

/// LSTM stack over the full `C·F` input; classifies the last hidden state.
#[derive(Clone, Debug)]
pub(crate) struct StackedNet {
    steps: usize,
    input_dim: usize,
    encoder: Vec<LstmSlot>,
    classifier: DenseSlot,
}

pub(crate) struct StackedTape {
    stack: StackTape,
    last: Vec<f64>,
}

impl StackedNet {
    pub fn build(b: &mut Builder<'_>, spec: &ModelSpec) -> Self {
        let encoder = super::banet::build_encoder(b, spec, spec.input_dim());
        let classifier = b.dense("classifier", spec.hidden, spec.classes);
        StackedNet {
            steps: spec.window,
            input_dim: spec.input_dim(),
            encoder,
            classifier,
        }
    }

    pub fn input_len(&self) -> usize {
        self.steps * self.input_dim
    }

    pub fn forward(&self, params: &[f64], input: &[f64], drop: &mut Dropout) -> (Vec<f64>, StackedTape) {
        let stack = stack_forward(&self.encoder, params, input, self.steps, 1, drop);
        let k = self.classifier.inputs;
        let last = stack.out[(self.steps - 1) * k..].to_vec();
        let mut logits = vec![0.0; self.classifier.outputs];
        self.classifier.view(params).apply(&last, &mut logits);
        (logits, StackedTape { stack, last })
    }

    pub fn backward(&self, params: &[f64], tape: StackedTape, dlogits: &[f64], grads: &mut [f64]) {
        let k = self.classifier.inputs;
        let mut dout = vec![0.0; self.steps * k];
        self.classifier
            .backward(params, &tape.last, dlogits, grads, Some(&mut dout[(self.steps - 1) * k..]));
        stack_backward(&self.encoder, params, &tape.stack, dout, grads, false);
    }
}

/// Bidirectional layers; each layer's output is `[forward_t, backward_t]`,
/// followed by dropout. Classifies `[forward_{T-1}, backward_0]`.
#[derive(Clone, Debug)]
pub(crate) struct BiNet {
    steps: usize,
    input_dim: usize,
    hidden: usize,
    layers: Vec<(LstmSlot, LstmSlot)>,
    classifier: DenseSlot,
}

pub(crate) struct BiTape {
    layers: Vec<(LstmTape, LstmTape, Option<Vec<f64>>)>,
    features: Vec<f64>,
}

impl BiNet {
    pub fn build(b: &mut Builder<'_>, spec: &ModelSpec) -> Self {
        let k = spec.hidden;
        let layers = (0..spec.lstm_layers)
            .map(|l| {
                let d = if l == 0 { spec.input_dim() } else { 2 * k };
                (b.lstm(&format!("bi.{l}.fwd"), d, k), b.lstm(&format!("bi.{l}.bwd"), d, k))
            })
            .collect();
        let classifier = b.dense("classifier", 2 * k, spec.classes);
        BiNet {
            steps: spec.window,
            input_dim: spec.input_dim(),
            hidden: k,
            layers,
            classifier,
        }
    }

    pub fn input_len(&self) -> usize {
        self.steps * self.input_dim
    }

    pub fn forward(&self, params: &[f64], input: &[f64], drop: &mut Dropout) -> (Vec<f64>, BiTape) {
        let (t_len, k) = (self.steps, self.hidden);
        let mut cur = input.to_vec();
        let mut tapes = Vec::with_capacity(self.layers.len());
        for (fwd, bwd) in &self.layers {
            let d = fwd.input_dim;
            let tf = forward_lanes(&fwd.view(params), &cur, t_len, 1);
            let tb = forward_lanes(&bwd.view(params), &reverse_time(&cur, t_len, d), t_len, 1);
            let mut out = vec![0.0; t_len * 2 * k];
            for t in 0..t_len {
                out[t * 2 * k..t * 2 * k + k].copy_from_slice(&tf.h[t * k..(t + 1) * k]);
                let rt = t_len - 1 - t;
                out[t * 2 * k + k..(t + 1) * 2 * k].copy_from_slice(&tb.h[rt * k..(rt + 1) * k]);
            }
            let mask = drop.apply(&mut out);
            tapes.push((tf, tb, mask));
            cur = out;
        }
        let mut features = cur[(t_len - 1) * 2 * k..(t_len - 1) * 2 * k + k].to_vec();
        features.extend_from_slice(&cur[k..2 * k]);
        let mut logits = vec![0.0; self.classifier.outputs];
        self.classifier.view(params).apply(&features, &mut logits);
        (logits, BiTape { layers: tapes, features })
    }

    pub fn backward(&self, params: &[f64], tape: BiTape, dlogits: &[f64], grads: &mut [f64]) {
        let (t_len, k) = (self.steps, self.hidden);
        let mut dfeat = vec![0.0; 2 * k];
        self.classifier.backward(params, &tape.features, dlogits, grads, Some(&mut dfeat));
        let mut dout = vec![0.0; t_len * 2 * k];
        dout[(t_len - 1) * 2 * k..(t_len - 1) * 2 * k + k].copy_from_slice(&dfeat[..k]);
        dout[k..2 * k].copy_from_slice(&dfeat[k..]);

        for (idx, ((fwd, bwd), (tf, tb, mask))) in self.layers.iter().zip(&tape.layers).enumerate().rev() {
            if let Some(m) = mask {
                dout.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
            }
            let mut dhf = vec![0.0; t_len * k];
            let mut dhb = vec![0.0; t_len * k];
            for t in 0..t_len {
                dhf[t * k..(t + 1) * k].copy_from_slice(&dout[t * 2 * k..t * 2 * k + k]);
                let rt = t_len - 1 - t;
                dhb[rt * k..(rt + 1) * k].copy_from_slice(&dout[t * 2 * k + k..(t + 1) * 2 * k]);
            }
            let need = idx > 0;
            let d = fwd.input_dim;
            let (gw, gb) = fwd.grads(grads);
            let dxf = backward_lanes(&fwd.view(params), tf, &dhf, gw, gb, need);
            let (gw, gb) = bwd.grads(grads);
            let dxr = backward_lanes(&bwd.view(params), tb, &dhb, gw, gb, need);
            if let (Some(mut dx), Some(dxr)) = (dxf, dxr) {
                let back = reverse_time(&dxr, t_len, d);
                dx.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
                dout = dx;
            }
        }
    }
}

/// `1 x kernel` convolution along time with ReLU, `1 x 2` max-pooling, then an LSTM.
///
/// The input is treated as a single-channel image of `C·F` feature rows by
/// `T` samples; pooled feature maps are flattened per timestep to `filters·C·F`.
#[derive(Clone, Debug)]
pub(crate) struct ConvLstmNet {
    steps: usize,
    rows: usize,
    conv_w: Range<usize>,
    conv_b: Range<usize>,
    encoder: Vec<LstmSlot>,
    classifier: DenseSlot,
}

pub(crate) struct ConvLstmTape {
    /// ReLU activity and argmax of each pooled cell (index into conv time).
    relu_on: Vec<bool>,
    argmax: Vec<usize>,
    stack: StackTape,
    last: Vec<f64>,
}

impl ConvLstmNet {
    pub fn build(b: &mut Builder<'_>, spec: &ModelSpec) -> Self {
        let conv_w = b.raw(
            "conv.w",
            CONV_FILTERS,
            CONV_KERNEL,
            Some(glorot_limit(CONV_KERNEL, CONV_KERNEL * CONV_FILTERS)),
        );
        let conv_b = b.raw("conv.b", 1, CONV_FILTERS, None);
        let rows = spec.input_dim();
        let encoder = (0..spec.lstm_layers)
            .map(|l| {
                let d = if l == 0 { CONV_FILTERS * rows } else { spec.hidden };
                b.lstm(&format!("lstm.{l}"), d, spec.hidden)
            })
            .collect();
        let classifier = b.dense("classifier", spec.hidden, spec.classes);
        ConvLstmNet {
            steps: spec.window,
            rows,
            conv_w,
            conv_b,
            encoder,
            classifier,
        }
    }

    pub fn input_len(&self) -> usize {
        self.steps * self.rows
    }

    fn conv_len(&self) -> usize {
        self.steps + 1 - CONV_KERNEL
    }

    fn pooled_len(&self) -> usize {
        self.conv_len() / CONV_POOL
    }

    pub fn forward(&self, params: &[f64], input: &[f64], drop: &mut Dropout) -> (Vec<f64>, ConvLstmTape) {
        let (r, tc, tp) = (self.rows, self.conv_len(), self.pooled_len());
        let w = &params[self.conv_w.clone()];
        let bias = &params[self.conv_b.clone()];
        // conv[f][row][t]
        let mut conv = vec![0.0; CONV_FILTERS * r * tc];
        for f in 0..CONV_FILTERS {
            let wf = &w[f * CONV_KERNEL..(f + 1) * CONV_KERNEL];
            for row in 0..r {
                let out = &mut conv[(f * r + row) * tc..(f * r + row + 1) * tc];
                for (t, o) in out.iter_mut().enumerate() {
                    let mut acc = bias[f];
                    for (j, &wj) in wf.iter().enumerate() {
                        acc += wj * input[(t + j) * r + row];
                    }
                    *o = acc;
                }
            }
        }
        let relu_on: Vec<bool> = conv.iter().map(|&v| v > 0.0).collect();
        let feat = CONV_FILTERS * r;
        let mut pooled = vec![0.0; tp * feat];
        let mut argmax = vec![0; tp * feat];
        for f in 0..CONV_FILTERS {
            for row in 0..r {
                let base = (f * r + row) * tc;
                for t in 0..tp {
                    let mut best = 0usize;
                    let mut best_v = f64::NEG_INFINITY;
                    for q in 0..CONV_POOL {
                        let v = conv[base + t * CONV_POOL + q].max(0.0);
                        if v > best_v {
                            best_v = v;
                            best = t * CONV_POOL + q;
                        }
                    }
                    pooled[t * feat + f * r + row] = best_v;
                    argmax[t * feat + f * r + row] = best;
                }
            }
        }
        let stack = stack_forward(&self.encoder, params, &pooled, tp, 1, drop);
        let k = self.classifier.inputs;
        let last = stack.out[(tp - 1) * k..].to_vec();
        let mut logits = vec![0.0; self.classifier.outputs];
        self.classifier.view(params).apply(&last, &mut logits);
        (
            logits,
            ConvLstmTape {
                relu_on,
                argmax,
                stack,
                last,
            },
        )
    }

    pub fn backward(&self, params: &[f64], input: &[f64], tape: ConvLstmTape, dlogits: &[f64], grads: &mut [f64]) {
        let (r, tc, tp) = (self.rows, self.conv_len(), self.pooled_len());
        let k = self.classifier.inputs;
        let mut dout = vec![0.0; tp * k];
        self.classifier
            .backward(params, &tape.last, dlogits, grads, Some(&mut dout[(tp - 1) * k..]));
        let dpooled = stack_backward(&self.encoder, params, &tape.stack, dout, grads, true)
            .expect("input gradient requested");
        let feat = CONV_FILTERS * r;
        let mut dconv = vec![0.0; CONV_FILTERS * r * tc];
        for t in 0..tp {
            for f in 0..CONV_FILTERS {
                for row in 0..r {
                    let i = t * feat + f * r + row;
                    let src = (f * r + row) * tc + tape.argmax[i];
                    if tape.relu_on[src] {
                        dconv[src] += dpooled[i];
                    }
                }
            }
        }
        let (gw, gb) = grads.split_at_mut(self.conv_b.start);
        let gw = &mut gw[self.conv_w.clone()];
        let gb = &mut gb[..CONV_FILTERS];
        for f in 0..CONV_FILTERS {
            for row in 0..r {
                let d = &dconv[(f * r + row) * tc..(f * r + row + 1) * tc];
                for (t, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    gb[f] += dv;
                    for j in 0..CONV_KERNEL {
                        gw[f * CONV_KERNEL + j] += dv * input[(t + j) * r + row];
                    }
                }
            }
        }
    }
}
