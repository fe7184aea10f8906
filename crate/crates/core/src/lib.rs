//! Body-attention LSTM classifiers for protective-behaviour detection, with the
//! data pipeline, synthetic data generator and evaluation harness around them.

pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod util;

pub use data::{Cohort, Dataset, Label, MovementInstance, Normalizer, Segment};
pub use error::{Error, Result};
pub use model::{build_model, count_parameters, AttentionRecord, Model, ModelSpec, Variant};
pub use nn::Matrix;
