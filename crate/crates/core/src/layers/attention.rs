//! Attention layers: additive (Bahdanau-style) attention over a hidden
//! sequence, and scaled dot-product multi-head self-attention.

use crate::autodiff::{Axis, NodeId, ReduceKind, Tape};
use crate::error::{Error, Result};

/// Additive attention parameters: hidden/query projections `[d, d_a]`
/// and the score vector `[d_a, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct BahdanauIds {
    pub hidden_proj: NodeId,
    pub query_proj: NodeId,
    pub score: NodeId,
}

/// Context vector and attention weights over a hidden sequence.
pub struct BahdanauOutput {
    /// `[1, d]` convex combination of hidden states.
    pub context: NodeId,
    /// `[T]` softmax weights.
    pub weights: NodeId,
}

/// Additive attention with the mean hidden state as query:
/// `e_t = score^T tanh(W_h h_t + W_q q)`, weights = softmax(e),
/// context = sum of weighted hidden states.
pub fn bahdanau_attend(tape: &mut Tape, params: &BahdanauIds, seq: NodeId) -> Result<BahdanauOutput> {
    let query = tape.reduce(ReduceKind::Mean, seq, Some(Axis::Rows))?; // [d]
    let query_row = {
        let d = tape.value(query).numel();
        tape.reshape(query, vec![1, d])?
    };
    let projected_hidden = tape.matmul(seq, params.hidden_proj)?; // [T, d_a]
    let projected_query = tape.matmul(query_row, params.query_proj)?; // [1, d_a]
    let query_vec = {
        let d_a = tape.value(projected_query).numel();
        tape.reshape(projected_query, vec![d_a])?
    };
    let combined = tape.add_row_bias(projected_hidden, query_vec)?;
    let activated = tape.tanh(combined);
    let scores = tape.matmul(activated, params.score)?; // [T, 1]
    let steps = tape.value(scores).numel();
    let scores_vec = tape.reshape(scores, vec![steps])?;
    let weights = tape.softmax(scores_vec, Axis::Cols);
    let weights_row = tape.reshape(weights, vec![1, steps])?;
    let context = tape.matmul(weights_row, seq)?; // [1, d]
    Ok(BahdanauOutput { context, weights })
}

/// One attention head's projections, each `[d, d_k]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionHeadIds {
    pub query: NodeId,
    pub key: NodeId,
    pub value: NodeId,
}

/// Multi-head attention: per-head projections plus the `[H*d_k, d]`
/// output projection.
#[derive(Debug, Clone)]
pub struct MultiHeadIds {
    pub heads: Vec<AttentionHeadIds>,
    pub output_proj: NodeId,
}

pub struct AttentionOutput {
    /// `[T, d]` (projected) or `[T, H*d_k]` (concatenated heads).
    pub output: NodeId,
    /// Per-head `[T, T]` row-normalized weight matrices.
    pub head_weights: Vec<NodeId>,
}

/// Scaled dot-product attention per head, heads concatenated column-wise.
/// No causal mask: every position attends to the full sequence.
pub fn self_attention_heads(
    tape: &mut Tape,
    heads: &[AttentionHeadIds],
    seq: NodeId,
) -> Result<AttentionOutput> {
    if heads.is_empty() {
        return Err(Error::Config("self-attention needs at least one head".into()));
    }
    let mut outputs = Vec::with_capacity(heads.len());
    let mut head_weights = Vec::with_capacity(heads.len());
    for head in heads {
        let key_dim = tape.value(head.query).dims2().1;
        let queries = tape.matmul(seq, head.query)?;
        let keys = tape.matmul(seq, head.key)?;
        let values = tape.matmul(seq, head.value)?;
        let keys_t = tape.transpose(keys)?;
        let scores = tape.matmul(queries, keys_t)?;
        let scaled = tape.scale(scores, 1.0 / (key_dim as f64).sqrt());
        let weights = tape.softmax(scaled, Axis::Cols);
        let attended = tape.matmul(weights, values)?;
        outputs.push(attended);
        head_weights.push(weights);
    }
    let output = tape.concat_cols(&outputs)?;
    Ok(AttentionOutput { output, head_weights })
}

/// Full multi-head self-attention: concatenated heads projected back to
/// the model dimension by `output_proj`.
pub fn multi_head_self_attention(
    tape: &mut Tape,
    params: &MultiHeadIds,
    seq: NodeId,
) -> Result<AttentionOutput> {
    let heads = self_attention_heads(tape, &params.heads, seq)?;
    let output = tape.matmul(heads.output, params.output_proj)?;
    Ok(AttentionOutput { output, head_weights: heads.head_weights })
}
