//! Flat parameter storage.
//!
//! A model's trainable scalars live in one `Vec<f64>`; layers refer to named
//! slots inside it. Gradients, optimiser moments and serialisation all work
//! on the flat vector, and the slot table makes every scalar enumerable.

use std::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    values: Vec<f64>,
    slots: Vec<Slot>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn alloc(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Range<usize> {
        let slot = Slot {
            name: name.into(),
            offset: self.values.len(),
            rows,
            cols,
        };
        self.values.resize(self.values.len() + slot.len(), 0.0);
        let r = slot.range();
        self.slots.push(slot);
        r
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Name of the slot holding flat index `idx`, with the offset inside it.
    pub fn locate(&self, idx: usize) -> Option<(&str, usize)> {
        self.slots
            .iter()
            .find(|s| s.range().contains(&idx))
            .map(|s| (s.name.as_str(), idx - s.offset))
    }

    pub(crate) fn fill_uniform(&mut self, range: Range<usize>, limit: f64, rng: &mut Rng) {
        for v in &mut self.values[range] {
            *v = if limit > 0.0 { rng.random_range(-limit..limit) } else { 0.0 };
        }
    }

    pub(crate) fn fill(&mut self, range: Range<usize>, value: f64) {
        self.values[range].fill(value);
    }

    pub(crate) fn replace_values(&mut self, values: Vec<f64>) -> bool {
        if values.len() != self.values.len() {
            return false;
        }
        self.values = values;
        true
    }
}

/// Glorot/Xavier uniform limit `√(6/(fan_in+fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
