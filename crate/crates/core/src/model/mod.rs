//! Model zoo: the attention network, its ablations and the baselines.

mod attention;
mod banet;
mod baselines;
mod compatible;
pub mod io;
mod layers;
mod spec;

pub use attention::{body_attention, encode_parts, temporal_attention, AttentionRecord};
pub use layers::InitConfig;
pub use spec::{ModelSpec, Variant, CONV_FILTERS, CONV_KERNEL, CONV_POOL};

use banet::BanetNet;
use baselines::{BiNet, ConvLstmNet, StackedNet};
use compatible::CompatibleNet;
use layers::{Builder, Dropout};

use crate::error::{Error, Result};
use crate::nn::gradcheck::{grad_check, GradCheckReport};
use crate::nn::ops::{centered_cross_entropy, softmax_in_place};
use crate::nn::ParamStore;
use crate::rng::{stream, tag};

#[derive(Clone, Debug)]
enum Net {
    Banet(BanetNet),
    Compatible(CompatibleNet),
    Stacked(StackedNet),
    Bi(BiNet),
    ConvLstm(ConvLstmNet),
}

impl Net {
    fn input_len(&self) -> usize {
        match self {
            Net::Banet(n) => n.input_len(),
            Net::Compatible(n) => n.input_len(),
            Net::Stacked(n) => n.input_len(),
            Net::Bi(n) => n.input_len(),
            Net::ConvLstm(n) => n.input_len(),
        }
    }

    /// Forward pass; when `grad` is given, immediately backpropagates
    /// `dlogits = grad.0(probs)` into `grad.1`.
    fn run(
        &self,
        params: &[f64],
        input: &[f64],
        drop: &mut Dropout,
        grad: Option<(&dyn Fn(&[f64]) -> Vec<f64>, &mut [f64])>,
    ) -> (Vec<f64>, Vec<f64>, Option<AttentionRecord>) {
        macro_rules! finish {
            ($logits:expr) => {{
                let z = $logits;
                let mut p = z.clone();
                softmax_in_place(&mut p);
                (z, p)
            }};
        }
        match self {
            Net::Banet(n) => {
                let (logits, rec, tape) = n.forward(params, input, drop);
                let (logits, probs) = finish!(logits);
                if let Some((dl, g)) = grad {
                    n.backward(params, tape, &dl(&probs), g);
                }
                (logits, probs, Some(rec))
            }
            Net::Compatible(n) => {
                let (logits, rec, tape) = n.forward(params, input, drop);
                let (logits, probs) = finish!(logits);
                if let Some((dl, g)) = grad {
                    n.backward(params, input, tape, &dl(&probs), g);
                }
                (logits, probs, Some(rec))
            }
            Net::Stacked(n) => {
                let (logits, tape) = n.forward(params, input, drop);
                let (logits, probs) = finish!(logits);
                if let Some((dl, g)) = grad {
                    n.backward(params, tape, &dl(&probs), g);
                }
                (logits, probs, None)
            }
            Net::Bi(n) => {
                let (logits, tape) = n.forward(params, input, drop);
                let (logits, probs) = finish!(logits);
                if let Some((dl, g)) = grad {
                    n.backward(params, tape, &dl(&probs), g);
                }
                (logits, probs, None)
            }
            Net::ConvLstm(n) => {
                let (logits, tape) = n.forward(params, input, drop);
                let (logits, probs) = finish!(logits);
                if let Some((dl, g)) = grad {
                    n.backward(params, input, tape, &dl(&probs), g);
                }
                (logits, probs, None)
            }
        }
    }
}

/// Whether dropout is active, and if so which seed drives its masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    Infer,
    /// Masks for the `i`-th element of a batch come from stream `(seed, DROPOUT, i)`.
    Train { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub attention: Option<AttentionRecord>,
}

impl Prediction {
    /// Arg-max class (ties resolve to the lower index).
    pub fn class(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }
}

/// Mean cross-entropy over a batch, its gradient and the per-element probabilities.
#[derive(Clone, Debug)]
pub struct BatchGradients {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

/// A built architecture together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    seed: u64,
    params: ParamStore,
    net: Net,
}

pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    build_model_with(spec, seed, &InitConfig::default())
}

pub fn build_model_with(spec: &ModelSpec, seed: u64, init: &InitConfig) -> Result<Model> {
    spec.validate()?;
    let mut b = Builder::new(seed, init);
    let net = match spec.variant {
        Variant::Banet | Variant::BanetTime | Variant::BanetBody | Variant::BanetDense => {
            Net::Banet(BanetNet::build(&mut b, spec))
        }
        Variant::BanetCompatible => Net::Compatible(CompatibleNet::build(&mut b, spec)),
        Variant::StackedLstm => Net::Stacked(StackedNet::build(&mut b, spec)),
        Variant::BiLstm => Net::Bi(BiNet::build(&mut b, spec)),
        Variant::ConvLstm => Net::ConvLstm(ConvLstmNet::build(&mut b, spec)),
    };
    let model = Model {
        spec: spec.clone(),
        seed,
        params: b.store,
        net,
    };
    debug_assert_eq!(model.param_count(), spec.formula_param_count());
    Ok(model)
}

pub fn count_parameters(model: &Model) -> usize {
    model.param_count()
}

fn dropout_for(mode: ForwardMode, p: f64, index: usize) -> Dropout {
    match mode {
        ForwardMode::Infer => Dropout::inactive(),
        ForwardMode::Train { seed } => Dropout::active(p, stream(seed, &[tag::DROPOUT, index as u64])),
    }
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Replaces all parameter values; the count must match.
    pub fn set_params(&mut self, values: Vec<f64>) -> Result<()> {
        let n = values.len();
        if !self.params.replace_values(values) {
            return Err(Error::usage(format!(
                "model has {} parameters, got {n}",
                self.param_count()
            )));
        }
        Ok(())
    }

    /// Expected input: a `window x (parts·features)` row-major segment, parts grouped per row.
    pub fn input_len(&self) -> usize {
        self.net.input_len()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::usage(format!(
                "{} expects {} input values ({} x {}), got {}",
                self.spec.variant,
                self.input_len(),
                self.spec.window,
                self.spec.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64], mode: ForwardMode) -> Result<Prediction> {
        self.check_input(input)?;
        let mut drop = dropout_for(mode, self.spec.dropout_p, 0);
        let (_, probs, attention) = self.net.run(self.params.values(), input, &mut drop, None);
        Ok(Prediction { probs, attention })
    }

    pub fn predict(&self, input: &[f64]) -> Result<Prediction> {
        self.forward(input, ForwardMode::Infer)
    }

    /// The full attention-network forward pass; rejects every other variant.
    pub fn banet_forward(&self, input: &[f64], mode: ForwardMode) -> Result<(Vec<f64>, AttentionRecord)> {
        if self.spec.variant != Variant::Banet {
            return Err(Error::usage(format!("banet_forward called on a {} model", self.spec.variant)));
        }
        let p = self.forward(input, mode)?;
        Ok((p.probs, p.attention.expect("banet always records attention")))
    }

    /// Mean of the centred per-sample loss (cross-entropy minus `ln C`).
    fn batch_eval(&self, params: &[f64], batch: &[(&[f64], usize)], mode: ForwardMode, grads: Option<&mut [f64]>) -> (f64, Vec<Vec<f64>>) {
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut all = Vec::with_capacity(batch.len());
        let mut grads = grads;
        for (i, &(input, label)) in batch.iter().enumerate() {
            let mut drop = dropout_for(mode, self.spec.dropout_p, i);
            let dlogits = |p: &[f64]| -> Vec<f64> {
                p.iter()
                    .enumerate()
                    .map(|(c, &pc)| scale * (pc - if c == label { 1.0 } else { 0.0 }))
                    .collect()
            };
            let g = grads.as_deref_mut().map(|g| (&dlogits as &dyn Fn(&[f64]) -> Vec<f64>, g));
            let (logits, probs, _) = self.net.run(params, input, &mut drop, g);
            total += centered_cross_entropy(&logits, label);
            all.push(probs);
        }
        (total * scale, all)
    }

    fn log_classes(&self) -> f64 {
        (self.spec.classes as f64).ln()
    }

    fn check_batch(&self, batch: &[(&[f64], usize)]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        for &(input, label) in batch {
            self.check_input(input)?;
            if label >= self.spec.classes {
                return Err(Error::usage(format!("label {label} out of range")));
            }
        }
        Ok(())
    }

    /// Mean batch cross-entropy.
    pub fn loss(&self, batch: &[(&[f64], usize)], mode: ForwardMode) -> Result<f64> {
        self.check_batch(batch)?;
        Ok(self.batch_eval(self.params.values(), batch, mode, None).0 + self.log_classes())
    }

    /// Exact gradient of the mean batch cross-entropy w.r.t. every parameter.
    pub fn compute_gradients(&self, batch: &[(&[f64], usize)], mode: ForwardMode) -> Result<BatchGradients> {
        self.check_batch(batch)?;
        let mut grads = vec![0.0; self.param_count()];
        let (loss, probs) = self.batch_eval(self.params.values(), batch, mode, Some(&mut grads));
        Ok(BatchGradients { loss: loss + self.log_classes(), grads, probs })
    }

    /// Compares [`Model::compute_gradients`] with central differences of step `h`.
    ///
    /// In train mode the dropout masks are frozen by the seed, so the
    /// perturbed losses see identical masks. The differenced loss omits the
    /// constant `ln C`, which would otherwise dominate its rounding error.
    pub fn grad_check(&self, batch: &[(&[f64], usize)], mode: ForwardMode, h: f64, tol: f64) -> Result<GradCheckReport> {
        let analytic = self.compute_gradients(batch, mode)?.grads;
        let loss = |p: &[f64]| self.batch_eval(p, batch, mode, None).0;
        Ok(grad_check(self.params.values(), &analytic, loss, h, tol))
    }
}
