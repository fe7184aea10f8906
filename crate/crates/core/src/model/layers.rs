//! Layer descriptors bound to slots of a [`ParamStore`], plus the LSTM stack.

use std::ops::Range;

use crate::nn::lstm::{backward_lanes, dropout_mask, forward_lanes, LstmTape};
use crate::nn::params::{glorot_limit, ParamStore};
use crate::nn::{Conv1x1Params, DenseParams, LstmLayerParams};
use crate::rng::{stream, tag, Rng};

/// How fresh parameters are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitConfig {
    /// Glorot-uniform weights when true, all zeros otherwise.
    pub glorot: bool,
    pub forget_bias: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            glorot: true,
            forget_bias: 1.0,
        }
    }
}

/// Allocation context: hands out slots and initialises them from per-slot streams.
pub(crate) struct Builder<'a> {
    pub store: ParamStore,
    seed: u64,
    init: &'a InitConfig,
    counter: u64,
}

impl<'a> Builder<'a> {
    pub fn new(seed: u64, init: &'a InitConfig) -> Self {
        Builder {
            store: ParamStore::new(),
            seed,
            init,
            counter: 0,
        }
    }

    fn rng(&mut self) -> Rng {
        self.counter += 1;
        stream(self.seed, &[tag::INIT, self.counter])
    }

    fn weights(&mut self, name: String, rows: usize, cols: usize, limit: f64) -> Range<usize> {
        let r = self.store.alloc(name, rows, cols);
        let limit = if self.init.glorot { limit } else { 0.0 };
        let mut rng = self.rng();
        self.store.fill_uniform(r.clone(), limit, &mut rng);
        r
    }

    pub fn dense(&mut self, name: &str, inputs: usize, outputs: usize) -> DenseSlot {
        let w = self.weights(format!("{name}.w"), inputs, outputs, glorot_limit(inputs, outputs));
        let b = self.store.alloc(format!("{name}.b"), 1, outputs);
        DenseSlot {
            inputs,
            outputs,
            range: w.start..b.end,
        }
    }

    pub fn conv(&mut self, name: &str, k: usize) -> ConvSlot {
        let w = self.weights(format!("{name}.w"), 1, k, glorot_limit(k, 1));
        let b = self.store.alloc(format!("{name}.b"), 1, 1);
        ConvSlot { k, range: w.start..b.end }
    }

    pub fn lstm(&mut self, name: &str, input_dim: usize, hidden_dim: usize) -> LstmSlot {
        let g = 4 * hidden_dim;
        // Every gate block shares the shape (D+K) x K, hence one Glorot limit.
        let w = self.weights(
            format!("{name}.w"),
            input_dim + hidden_dim,
            g,
            glorot_limit(input_dim + hidden_dim, hidden_dim),
        );
        let b = self.store.alloc(format!("{name}.b"), 1, g);
        let forget = b.start + hidden_dim..b.start + 2 * hidden_dim;
        self.store.fill(forget, self.init.forget_bias);
        LstmSlot {
            input_dim,
            hidden_dim,
            range: w.start..b.end,
        }
    }

    /// Raw slot for layers without a dedicated descriptor.
    pub fn raw(&mut self, name: &str, rows: usize, cols: usize, limit: Option<f64>) -> Range<usize> {
        match limit {
            Some(l) => self.weights(name.to_string(), rows, cols, l),
            None => self.store.alloc(name, rows, cols),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DenseSlot {
    pub inputs: usize,
    pub outputs: usize,
    range: Range<usize>,
}

impl DenseSlot {
    pub fn view<'a>(&self, params: &'a [f64]) -> DenseParams<'a> {
        let (w, b) = params[self.range.clone()].split_at(self.inputs * self.outputs);
        DenseParams {
            inputs: self.inputs,
            outputs: self.outputs,
            w,
            b,
        }
    }

    pub fn grads<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        g[self.range.clone()].split_at_mut(self.inputs * self.outputs)
    }

    /// Backward pass helper: accumulate parameter gradients and optionally return `dx`.
    pub fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], grads: &mut [f64], dx: Option<&mut [f64]>) {
        let view = self.view(params);
        let (gw, gb) = self.grads(grads);
        view.backward(x, dy, gw, gb, dx);
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ConvSlot {
    pub k: usize,
    range: Range<usize>,
}

impl ConvSlot {
    pub fn view<'a>(&self, params: &'a [f64]) -> Conv1x1Params<'a> {
        let s = &params[self.range.clone()];
        Conv1x1Params { w: &s[..self.k], b: s[self.k] }
    }

    pub fn grads<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut f64) {
        let (w, b) = g[self.range.clone()].split_at_mut(self.k);
        (w, &mut b[0])
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LstmSlot {
    pub input_dim: usize,
    pub hidden_dim: usize,
    range: Range<usize>,
}

impl LstmSlot {
    fn w_len(&self) -> usize {
        (self.input_dim + self.hidden_dim) * 4 * self.hidden_dim
    }

    pub fn view<'a>(&self, params: &'a [f64]) -> LstmLayerParams<'a> {
        let (w, b) = params[self.range.clone()].split_at(self.w_len());
        LstmLayerParams {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            w,
            b,
        }
    }

    pub fn grads<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let n = self.w_len();
        g[self.range.clone()].split_at_mut(n)
    }
}

/// Dropout source for one forward pass; inactive in inference mode.
pub(crate) struct Dropout {
    p: f64,
    rng: Option<Rng>,
}

impl Dropout {
    pub fn inactive() -> Self {
        Dropout { p: 0.0, rng: None }
    }

    pub fn active(p: f64, rng: Rng) -> Self {
        Dropout { p, rng: Some(rng) }
    }

    /// Applies a fresh mask in place and returns it for the backward pass.
    pub fn apply(&mut self, x: &mut [f64]) -> Option<Vec<f64>> {
        let rng = self.rng.as_mut()?;
        let mask = dropout_mask(x.len(), self.p, rng);
        x.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        Some(mask)
    }
}

pub(crate) struct StackTape {
    layers: Vec<LstmTape>,
    masks: Vec<Option<Vec<f64>>>,
    /// Output of the last layer after dropout, `(T·N) x K`.
    pub out: Vec<f64>,
}

pub(crate) fn stack_forward(
    layers: &[LstmSlot],
    params: &[f64],
    x: &[f64],
    steps: usize,
    lanes: usize,
    drop: &mut Dropout,
) -> StackTape {
    let mut tapes = Vec::with_capacity(layers.len());
    let mut masks = Vec::with_capacity(layers.len());
    let mut cur: Option<Vec<f64>> = None;
    for layer in layers {
        let input = cur.as_deref().unwrap_or(x);
        let tape = forward_lanes(&layer.view(params), input, steps, lanes);
        let mut out = tape.h.clone();
        masks.push(drop.apply(&mut out));
        tapes.push(tape);
        cur = Some(out);
    }
    StackTape {
        layers: tapes,
        masks,
        out: cur.unwrap_or_else(|| x.to_vec()),
    }
}

/// Backpropagates `dout` (gradient w.r.t. the stack output) to the parameters,
/// returning the gradient w.r.t. the stack input when `want_dx` is set.
pub(crate) fn stack_backward(
    layers: &[LstmSlot],
    params: &[f64],
    tape: &StackTape,
    dout: Vec<f64>,
    grads: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let mut d = dout;
    for (idx, layer) in layers.iter().enumerate().rev() {
        if let Some(mask) = &tape.masks[idx] {
            d.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        let (gw, gb) = layer.grads(grads);
        let need = idx > 0 || want_dx;
        match backward_lanes(&layer.view(params), &tape.layers[idx], &d, gw, gb, need) {
            Some(dx) => d = dx,
            None => return None,
        }
    }
    Some(d)
}

impl LstmSlot {
    pub(crate) fn from_range(input_dim: usize, hidden_dim: usize, range: Range<usize>) -> Self {
        LstmSlot {
            input_dim,
            hidden_dim,
            range,
        }
    }
}
