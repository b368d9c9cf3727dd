//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Operations are recorded on a [`Graph`] as they execute; [`Graph::backward`]
//! sweeps the tape once in reverse and accumulates gradients into leaves.

mod batchnorm;
mod error;
mod graph;
mod tensor;

pub use batchnorm::{BatchNorm1d, DEFAULT_EPS, DEFAULT_MOMENTUM};
pub use error::{AdError, Result};
pub use graph::{BatchStats, Graph, Var, MIN_NORM};
pub use tensor::Tensor;
