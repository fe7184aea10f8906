//! Input-level body attention ("compatible" variant).
//!
//! At every timestep each feature row (angles, energies) of the `F x C` input
//! is reweighted by body attention over the parts. The reweighted `C·F`
//! vector feeds one LSTM stack; a single temporal attention pools its output
//! to `K` values, which are tiled to `K x C` so the classifier sees the same
//! input size as the attention network.

use super::attention::{attend_lane, attend_lane_backward, body_row, row_means, AttentionRecord};
use super::banet::{build_body, build_encoder, BodySlots};
use super::layers::{stack_backward, stack_forward, Builder, ConvSlot, DenseSlot, Dropout, LstmSlot, StackTape};
use super::spec::ModelSpec;
use crate::nn::matrix::Matrix;
use crate::nn::ops::{dot, softmax_backward};

#[derive(Clone, Debug)]
pub(crate) struct CompatibleNet {
    parts: usize,
    features: usize,
    steps: usize,
    hidden: usize,
    body: BodySlots,
    encoder: Vec<LstmSlot>,
    conv: ConvSlot,
    classifier: DenseSlot,
}

pub(crate) struct CompatibleTape {
    /// Body activations and scores per (t, feature), each `T·F x C`.
    body_u: Vec<f64>,
    body_b: Vec<f64>,
    stack: StackTape,
    attn: Vec<f64>,
    features: Vec<f64>,
}

impl CompatibleNet {
    pub fn build(b: &mut Builder<'_>, spec: &ModelSpec) -> Self {
        let body = build_body(b, spec.parts);
        let encoder = build_encoder(b, spec, spec.input_dim());
        let conv = b.conv("temporal", spec.hidden);
        let classifier = b.dense("classifier", spec.hidden * spec.parts, spec.classes);
        CompatibleNet {
            parts: spec.parts,
            features: spec.features_per_part,
            steps: spec.window,
            hidden: spec.hidden,
            body,
            encoder,
            conv,
            classifier,
        }
    }

    pub fn input_len(&self) -> usize {
        self.steps * self.parts * self.features
    }

    pub fn forward(&self, params: &[f64], input: &[f64], drop: &mut Dropout) -> (Vec<f64>, AttentionRecord, CompatibleTape) {
        let (c, f, k, t_len) = (self.parts, self.features, self.hidden, self.steps);
        let (fc1, fc2) = (self.body.fc1.view(params), self.body.fc2.view(params));
        let rows = t_len * f;
        let mut body_u = vec![0.0; rows * c];
        let mut body_b = vec![0.0; rows * c];
        let mut weighted = vec![0.0; input.len()];
        let mut v = vec![0.0; c];
        for t in 0..t_len {
            for feat in 0..f {
                let row = t * f + feat;
                for part in 0..c {
                    v[part] = input[t * c * f + part * f + feat];
                }
                let r = row * c..(row + 1) * c;
                body_row(&fc1, &fc2, &v, &mut body_u[r.clone()], &mut body_b[r.clone()]);
                for part in 0..c {
                    weighted[t * c * f + part * f + feat] = body_b[row * c + part] * v[part];
                }
            }
        }

        let stack = stack_forward(&self.encoder, params, &weighted, t_len, 1, drop);
        let conv = self.conv.view(params);
        let mut attn: Vec<f64> = (0..t_len).map(|t| dot(&stack.out[t * k..(t + 1) * k], conv.w) + conv.b).collect();
        let mut pooled = vec![0.0; k];
        attend_lane(&mut attn, &stack.out, 1, 0, k, &mut pooled);

        let features: Vec<f64> = (0..k * c).map(|i| pooled[i / c]).collect();
        let mut logits = vec![0.0; self.classifier.outputs];
        self.classifier.view(params).apply(&features, &mut logits);

        // Body scores averaged over time, one row per input feature.
        let mut body_mean = Matrix::zeros(f, c);
        for t in 0..t_len {
            for feat in 0..f {
                let row = t * f + feat;
                for (o, &b) in body_mean.row_mut(feat).iter_mut().zip(&body_b[row * c..(row + 1) * c]) {
                    *o += b / t_len as f64;
                }
            }
        }
        let record = AttentionRecord {
            temporal: Matrix::from_vec(1, t_len, attn.clone()).expect("1 x t"),
            body_summary: Some(row_means(&body_mean)),
            body: Some(body_mean),
        };
        let tape = CompatibleTape {
            body_u,
            body_b,
            stack,
            attn,
            features,
        };
        (logits, record, tape)
    }

    pub fn backward(&self, params: &[f64], input: &[f64], tape: CompatibleTape, dlogits: &[f64], grads: &mut [f64]) {
        let (c, f, k, t_len) = (self.parts, self.features, self.hidden, self.steps);
        let mut dfeat = vec![0.0; k * c];
        self.classifier.backward(params, &tape.features, dlogits, grads, Some(&mut dfeat));
        let mut dpooled = vec![0.0; k];
        for (i, d) in dfeat.iter().enumerate() {
            dpooled[i / c] += d;
        }

        let h = &tape.stack.out;
        let mut dh = vec![0.0; h.len()];
        let ds = attend_lane_backward(&tape.attn, h, 1, 0, k, &dpooled, &mut dh);
        let w = self.conv.view(params).w;
        {
            let (gw, gb) = self.conv.grads(grads);
            for (t, &d) in ds.iter().enumerate() {
                *gb += d;
                for j in 0..k {
                    gw[j] += d * h[t * k + j];
                    dh[t * k + j] += d * w[j];
                }
            }
        }
        let dweighted = stack_backward(&self.encoder, params, &tape.stack, dh, grads, true)
            .expect("input gradient requested");

        let mut v = vec![0.0; c];
        let mut db = vec![0.0; c];
        let mut dz2 = vec![0.0; c];
        let mut du = vec![0.0; c];
        for t in 0..t_len {
            for feat in 0..f {
                let row = t * f + feat;
                for part in 0..c {
                    let idx = t * c * f + part * f + feat;
                    v[part] = input[idx];
                    db[part] = dweighted[idx] * input[idx];
                }
                let b = &tape.body_b[row * c..(row + 1) * c];
                let u = &tape.body_u[row * c..(row + 1) * c];
                softmax_backward(b, &db, &mut dz2);
                self.body.fc2.backward(params, u, &dz2, grads, Some(&mut du));
                for (d, &ui) in du.iter_mut().zip(u) {
                    *d *= 1.0 - ui * ui;
                }
                self.body.fc1.backward(params, &v, &du, grads, None);
            }
        }
    }
}
