//! Parameterized layer primitives used by the model zoo.
//!
//! Each layer is a free function over a [`crate::Tape`] plus a small
//! struct of parameter node handles, so the same code path serves both
//! training (gradients on) and evaluation.

mod attention;
mod conv;
pub mod init;
mod lstm;

pub use attention::{
    bahdanau_attend, multi_head_self_attention, self_attention_heads, AttentionHeadIds,
    AttentionOutput, BahdanauIds, BahdanauOutput, MultiHeadIds,
};
pub use conv::{causal_conv1d, CausalConvIds};
pub use lstm::{lstm_cell, lstm_stack, LstmGateIds, LstmLayerIds, LstmStackOutput};
