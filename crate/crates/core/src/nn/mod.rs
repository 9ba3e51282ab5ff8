//! Dense-matrix neural network core: matrices, layers, multilayer
//! perceptrons with cached forward/backward passes, losses and optimizers.
//!
//! Everything is `f64`. Layers store weights as `in × out` row-major
//! matrices so that a batch forward pass is `x · W + b` with rows as
//! samples.

mod layer;
mod loss;
mod matrix;
mod optim;

pub use layer::{Activation, Layer, Linear, Mlp};
pub(crate) use layer::{affine as layer_affine, affine_backward as layer_affine_backward};
pub use loss::{huber, huber_elem, log_softmax_rows, mse, softmax_rows};
pub use matrix::{Matrix, Parameter};
pub use optim::{clip_grad_norm, sgd_step, AdamConfig, AdamState, Optimizer, OptimizerKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, NnError>;
