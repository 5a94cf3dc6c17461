//! Univariate time-series forecasting engine with a trading backtester.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense tensors and a tape for reverse-mode gradients
//! - [`layers`]: LSTM cells/stacks, attention, causal convolution, dropout
//! - [`model`]: the seven forecasting architectures behind one [`model::ModelSpec`]
//! - [`data`]: CSV ingestion, leakage-free z-scoring, sliding windows
//! - [`train`]: mini-batch Adam with early stopping
//! - [`forecast`]: autoregressive / teacher-forcing rollouts and RMSE
//! - [`bot`]: the sign/curvature buy-sell rule and portfolio ledger

pub mod autodiff;
pub mod layers;
pub mod model;
pub mod error;

pub use autodiff::{Axis, NodeId, ReduceKind, Tape, Tensor};
pub use error::{Error, Result};
