//! Scalar-free tensor autodiff: [`Tensor`] values plus a recording
//! [`Tape`] with reverse-mode gradients.

mod tape;
mod tensor;

pub use tape::{Axis, NodeId, ReduceKind, Tape};
pub use tensor::Tensor;
