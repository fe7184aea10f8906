//! The attention network and its temporal/body ablations.
//!
//! Pipeline per segment: shared LSTM encoder over the 13 parts (as lanes) →
//! per-part temporal attention → body attention over the pooled `K x C`
//! matrix → flatten → dense softmax classifier.

use super::attention::{attend_lane, attend_lane_backward, body_row, row_means, AttentionRecord};
use super::layers::{stack_backward, stack_forward, Builder, ConvSlot, DenseSlot, Dropout, LstmSlot, StackTape};
use super::spec::{ModelSpec, Variant};
use crate::nn::matrix::Matrix;
use crate::nn::ops::{dot, softmax_backward};

/// How per-timestep attention scores are produced.
#[derive(Clone, Debug)]
pub(crate) enum TemporalScorer {
    /// One 1x1 conv per body part.
    PerPart(Vec<ConvSlot>),
    /// A single 1x1 conv shared by all parts, acting as learned pooling.
    Shared(ConvSlot),
    /// Fully-connected map from the flattened `T x K` block to `T` scores, shared by all parts.
    Dense(DenseSlot),
}

#[derive(Clone, Debug)]
pub(crate) struct BodySlots {
    pub fc1: DenseSlot,
    pub fc2: DenseSlot,
}

#[derive(Clone, Debug)]
pub(crate) struct BanetNet {
    parts: usize,
    features: usize,
    steps: usize,
    hidden: usize,
    encoder: Vec<LstmSlot>,
    temporal: TemporalScorer,
    body: Option<BodySlots>,
    classifier: DenseSlot,
}

pub(crate) struct BanetTape {
    stack: StackTape,
    /// Temporal attention weights, `C x T`.
    attn: Vec<f64>,
    /// Pooled states transposed: `V[k][c]`, `K x C`.
    pooled: Vec<f64>,
    /// Body activations `tanh(fc1 v)` and scores, `K x C` each.
    body_u: Vec<f64>,
    body_b: Vec<f64>,
    features: Vec<f64>,
}

pub(crate) fn build_encoder(b: &mut Builder<'_>, spec: &ModelSpec, input: usize) -> Vec<LstmSlot> {
    (0..spec.lstm_layers)
        .map(|l| b.lstm(&format!("encoder.{l}"), if l == 0 { input } else { spec.hidden }, spec.hidden))
        .collect()
}

pub(crate) fn build_body(b: &mut Builder<'_>, parts: usize) -> BodySlots {
    BodySlots {
        fc1: b.dense("body.fc1", parts, parts),
        fc2: b.dense("body.fc2", parts, parts),
    }
}

impl BanetNet {
    pub fn build(b: &mut Builder<'_>, spec: &ModelSpec) -> Self {
        let (c, k) = (spec.parts, spec.hidden);
        let encoder = build_encoder(b, spec, spec.features_per_part);
        let temporal = match spec.variant {
            Variant::Banet | Variant::BanetTime => {
                TemporalScorer::PerPart((0..c).map(|i| b.conv(&format!("temporal.{i}"), k)).collect())
            }
            Variant::BanetBody => TemporalScorer::Shared(b.conv("temporal.shared", k)),
            Variant::BanetDense => TemporalScorer::Dense(b.dense("temporal.dense", spec.window * k, spec.window)),
            other => unreachable!("{other} is not an attention-network variant"),
        };
        let body = spec.variant.has_body_attention().then(|| build_body(b, c));
        let classifier = b.dense("classifier", k * c, spec.classes);
        BanetNet {
            parts: c,
            features: spec.features_per_part,
            steps: spec.window,
            hidden: k,
            encoder,
            temporal,
            body,
            classifier,
        }
    }

    pub fn input_len(&self) -> usize {
        self.steps * self.parts * self.features
    }

    pub fn forward(&self, params: &[f64], input: &[f64], drop: &mut Dropout) -> (Vec<f64>, AttentionRecord, BanetTape) {
        let (c, k, t_len) = (self.parts, self.hidden, self.steps);
        // Row t of the segment is already [part][feature], i.e. the lane layout.
        let stack = stack_forward(&self.encoder, params, input, t_len, c, drop);
        let h = &stack.out;

        let mut attn = vec![0.0; c * t_len];
        let mut pooled_ck = vec![0.0; c * k];
        let mut block = Vec::new();
        for part in 0..c {
            let scores = &mut attn[part * t_len..(part + 1) * t_len];
            match &self.temporal {
                TemporalScorer::PerPart(convs) => score_conv(&convs[part].view(params), h, c, part, k, scores),
                TemporalScorer::Shared(conv) => score_conv(&conv.view(params), h, c, part, k, scores),
                TemporalScorer::Dense(dense) => {
                    gather_part(h, t_len, c, part, k, &mut block);
                    dense.view(params).apply(&block, scores);
                }
            }
            attend_lane(scores, h, c, part, k, &mut pooled_ck[part * k..(part + 1) * k]);
        }

        let mut pooled = vec![0.0; k * c];
        for part in 0..c {
            for j in 0..k {
                pooled[j * c + part] = pooled_ck[part * k + j];
            }
        }

        let (mut body_u, mut body_b) = (Vec::new(), Vec::new());
        let features = match &self.body {
            Some(body) => {
                body_u = vec![0.0; k * c];
                body_b = vec![0.0; k * c];
                let (fc1, fc2) = (body.fc1.view(params), body.fc2.view(params));
                let mut feats = vec![0.0; k * c];
                for j in 0..k {
                    let r = j * c..(j + 1) * c;
                    body_row(&fc1, &fc2, &pooled[r.clone()], &mut body_u[r.clone()], &mut body_b[r.clone()]);
                    for i in r {
                        feats[i] = body_b[i] * pooled[i];
                    }
                }
                feats
            }
            None => pooled.clone(),
        };

        let mut logits = vec![0.0; self.classifier.outputs];
        self.classifier.view(params).apply(&features, &mut logits);

        let body_scores = self.body.as_ref().map(|_| Matrix::from_vec(k, c, body_b.clone()).expect("k x c"));
        let record = AttentionRecord {
            temporal: Matrix::from_vec(c, t_len, attn.clone()).expect("c x t"),
            body_summary: body_scores.as_ref().map(row_means),
            body: body_scores,
        };
        let tape = BanetTape {
            stack,
            attn,
            pooled,
            body_u,
            body_b,
            features,
        };
        (logits, record, tape)
    }

    pub fn backward(&self, params: &[f64], tape: BanetTape, dlogits: &[f64], grads: &mut [f64]) {
        let (c, k, t_len) = (self.parts, self.hidden, self.steps);
        let mut dfeat = vec![0.0; k * c];
        self.classifier.backward(params, &tape.features, dlogits, grads, Some(&mut dfeat));

        let dpooled = match &self.body {
            Some(body) => {
                let mut dv = vec![0.0; k * c];
                let mut db = vec![0.0; c];
                let mut dz2 = vec![0.0; c];
                let mut du = vec![0.0; c];
                let mut dv1 = vec![0.0; c];
                for j in 0..k {
                    let r = j * c..(j + 1) * c;
                    let (v, u, b) = (&tape.pooled[r.clone()], &tape.body_u[r.clone()], &tape.body_b[r.clone()]);
                    for i in 0..c {
                        db[i] = dfeat[j * c + i] * v[i];
                        dv[j * c + i] = dfeat[j * c + i] * b[i];
                    }
                    softmax_backward(b, &db, &mut dz2);
                    body.fc2.backward(params, u, &dz2, grads, Some(&mut du));
                    for (d, &ui) in du.iter_mut().zip(u) {
                        *d *= 1.0 - ui * ui;
                    }
                    body.fc1.backward(params, v, &du, grads, Some(&mut dv1));
                    for i in 0..c {
                        dv[j * c + i] += dv1[i];
                    }
                }
                dv
            }
            None => dfeat,
        };

        let h = &tape.stack.out;
        let mut dh = vec![0.0; h.len()];
        let mut dp = vec![0.0; k];
        let mut block = Vec::new();
        let mut dblock = vec![0.0; t_len * k];
        for part in 0..c {
            for j in 0..k {
                dp[j] = dpooled[j * c + part];
            }
            let a = &tape.attn[part * t_len..(part + 1) * t_len];
            let ds = attend_lane_backward(a, h, c, part, k, &dp, &mut dh);
            match &self.temporal {
                TemporalScorer::PerPart(convs) => score_conv_backward(&convs[part], params, h, c, part, k, &ds, grads, &mut dh),
                TemporalScorer::Shared(conv) => score_conv_backward(conv, params, h, c, part, k, &ds, grads, &mut dh),
                TemporalScorer::Dense(dense) => {
                    gather_part(h, t_len, c, part, k, &mut block);
                    dense.backward(params, &block, &ds, grads, Some(&mut dblock));
                    for t in 0..t_len {
                        let off = (t * c + part) * k;
                        for j in 0..k {
                            dh[off + j] += dblock[t * k + j];
                        }
                    }
                }
            }
        }
        stack_backward(&self.encoder, params, &tape.stack, dh, grads, false);
    }
}

fn score_conv(conv: &crate::nn::Conv1x1Params<'_>, h: &[f64], lanes: usize, lane: usize, k: usize, scores: &mut [f64]) {
    for (t, s) in scores.iter_mut().enumerate() {
        let off = (t * lanes + lane) * k;
        *s = dot(&h[off..off + k], conv.w) + conv.b;
    }
}

#[allow(clippy::too_many_arguments)]
fn score_conv_backward(
    conv: &ConvSlot,
    params: &[f64],
    h: &[f64],
    lanes: usize,
    lane: usize,
    k: usize,
    ds: &[f64],
    grads: &mut [f64],
    dh: &mut [f64],
) {
    let w = conv.view(params).w;
    let (gw, gb) = conv.grads(grads);
    for (t, &d) in ds.iter().enumerate() {
        let off = (t * lanes + lane) * k;
        *gb += d;
        for j in 0..k {
            gw[j] += d * h[off + j];
            dh[off + j] += d * w[j];
        }
    }
}

fn gather_part(h: &[f64], steps: usize, lanes: usize, lane: usize, k: usize, out: &mut Vec<f64>) {
    out.clear();
    for t in 0..steps {
        let off = (t * lanes + lane) * k;
        out.extend_from_slice(&h[off..off + k]);
    }
}
