//! Numerical core: layers, exact gradients, Adam, gradient checking.

pub mod adam;
pub mod gradcheck;
pub mod lstm;
pub mod matrix;
pub mod ops;
pub mod params;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheckReport};
pub use lstm::{bidirectional_forward, lstm_forward, lstm_stack_forward, LstmLayerParams, Mode};
pub use matrix::Matrix;
pub use ops::{
    conv1x1_time_forward, cross_entropy_loss, dense_forward, sigmoid, softmax, Activation, Conv1x1Params,
    DenseParams,
};
pub use params::ParamStore;
