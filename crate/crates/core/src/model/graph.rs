//! Forward-pass graph builders, one per architecture.
//!
//! Builders take an input window node `[k, 1]` (z-score space) and
//! return the forecast node `[h]`. Passing a dropout RNG switches the
//! graph to training form; `None` builds the evaluation graph.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Axis, NodeId, ReduceKind, Tape};
use crate::error::{Error, Result};
use crate::layers::{
    bahdanau_attend, causal_conv1d, lstm_stack, multi_head_self_attention, self_attention_heads,
    AttentionHeadIds, BahdanauIds, CausalConvIds, LstmGateIds, LstmLayerIds, MultiHeadIds,
};

use super::spec::{ModelKind, ModelSpec, TCN_KERNEL_SIZE};

/// Node handles of a model's parameters on one tape, keyed by layout name.
pub struct ParamBinding {
    map: BTreeMap<String, NodeId>,
}

impl ParamBinding {
    pub fn new(map: BTreeMap<String, NodeId>) -> Self {
        ParamBinding { map }
    }

    /// Node handle for a parameter by its layout name.
    ///
    /// Panics on unknown names; the layout fixes the name set.
    pub fn node(&self, name: &str) -> NodeId {
        self.id(name)
    }

    /// Iterate `(name, node)` pairs in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.map.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn id(&self, name: &str) -> NodeId {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from binding"))
    }

    fn lstm_layer(&self, index: usize) -> LstmLayerIds {
        let gate = |gate: &str| LstmGateIds {
            input_weight: self.id(&format!("lstm{index}.{gate}.w")),
            recurrent_weight: self.id(&format!("lstm{index}.{gate}.u")),
            bias: self.id(&format!("lstm{index}.{gate}.b")),
        };
        LstmLayerIds {
            forget: gate("forget"),
            input: gate("input"),
            output: gate("output"),
            candidate: gate("candidate"),
        }
    }

    fn attention_heads(&self, prefix: &str, num_heads: usize) -> Vec<AttentionHeadIds> {
        (0..num_heads)
            .map(|h| AttentionHeadIds {
                query: self.id(&format!("{prefix}.h{h}.q")),
                key: self.id(&format!("{prefix}.h{h}.k")),
                value: self.id(&format!("{prefix}.h{h}.v")),
            })
            .collect()
    }
}

/// Dropout configuration for one forward pass: `None` = evaluation.
pub type DropoutCtx<'a> = Option<(f64, &'a mut ChaCha8Rng)>;

const LAYERNORM_EPS: f64 = 1e-5;

/// Build the forward graph for `spec` and return the `[h]` output node.
pub fn forward(
    tape: &mut Tape,
    params: &ParamBinding,
    spec: &ModelSpec,
    x: NodeId,
    mut dropout: DropoutCtx<'_>,
) -> Result<NodeId> {
    let got = tape.value(x).shape().to_vec();
    if got != [spec.past_history, 1] {
        return Err(Error::Dimension {
            op: "model-forward",
            lhs: got,
            rhs: vec![spec.past_history, 1],
        });
    }
    let pooled = match spec.kind {
        ModelKind::Lstm => {
            let layers = [params.lstm_layer(0), params.lstm_layer(1)];
            let out = lstm_stack(tape, &layers, x, reborrow(&mut dropout))?;
            out.last_hidden
        }
        ModelKind::AttentionLstm => {
            let layers = [params.lstm_layer(0), params.lstm_layer(1)];
            let out = lstm_stack(tape, &layers, x, reborrow(&mut dropout))?;
            let attn = BahdanauIds {
                hidden_proj: params.id("attn.hidden_proj"),
                query_proj: params.id("attn.query_proj"),
                score: params.id("attn.score"),
            };
            bahdanau_attend(tape, &attn, out.sequence)?.context
        }
        ModelKind::MultiHeadAttentionLstm => {
            let layers = [params.lstm_layer(0), params.lstm_layer(1)];
            let out = lstm_stack(tape, &layers, x, reborrow(&mut dropout))?;
            let mha = MultiHeadIds {
                heads: params.attention_heads("mha", spec.num_heads),
                output_proj: params.id("mha.out_proj"),
            };
            let attended = multi_head_self_attention(tape, &mha, out.sequence)?;
            pool_rows(tape, attended.output)?
        }
        ModelKind::Tcn => {
            let conv = |params: &ParamBinding, layer: usize| CausalConvIds {
                taps: (0..TCN_KERNEL_SIZE)
                    .map(|t| params.id(&format!("conv{layer}.tap{t}")))
                    .collect(),
                bias: params.id(&format!("conv{layer}.bias")),
            };
            let first = causal_conv1d(tape, &conv(params, 0), x)?;
            let second = causal_conv1d(tape, &conv(params, 1), first)?;
            pool_rows(tape, second)?
        }
        ModelKind::Informer | ModelKind::Transformer => {
            let embedded = tape.matmul(x, params.id("embed.w"))?;
            let mut hidden = tape.add_row_bias(embedded, params.id("embed.b"))?;
            if spec.kind == ModelKind::Transformer {
                hidden = tape.add(hidden, params.id("pos.embedding"))?;
            }
            for block in 0..spec.num_encoder_layers {
                hidden = encoder_block(tape, params, spec, block, hidden, &mut dropout)?;
            }
            pool_rows(tape, hidden)?
        }
        ModelKind::Tft => {
            let layers = [params.lstm_layer(0), params.lstm_layer(1)];
            let out = lstm_stack(tape, &layers, x, reborrow(&mut dropout))?;
            let heads = self_attention_heads(
                tape,
                &params.attention_heads("mha", spec.num_heads),
                out.sequence,
            )?;
            let normed = tape.layernorm(
                heads.output,
                params.id("attn_norm.gain"),
                params.id("attn_norm.bias"),
                LAYERNORM_EPS,
            )?;
            let gate_pre = tape.matmul(normed, params.id("gate.w"))?;
            let gate_pre = tape.add_row_bias(gate_pre, params.id("gate.b"))?;
            let gate = tape.sigmoid(gate_pre);
            let gated = tape.mul(gate, normed)?;
            let residual = tape.add(out.sequence, gated)?;
            pool_rows(tape, residual)?
        }
    };
    let projected = tape.matmul(pooled, params.id("head.w"))?;
    let biased = tape.add_row_bias(projected, params.id("head.b"))?;
    tape.reshape(biased, vec![spec.forward_look])
}

/// Mean over time, reshaped to a `[1, d]` row for the linear head.
fn pool_rows(tape: &mut Tape, seq: NodeId) -> Result<NodeId> {
    let pooled = tape.reduce(ReduceKind::Mean, seq, Some(Axis::Rows))?;
    let d = tape.value(pooled).numel();
    tape.reshape(pooled, vec![1, d])
}

fn encoder_block(
    tape: &mut Tape,
    params: &ParamBinding,
    spec: &ModelSpec,
    block: usize,
    input: NodeId,
    dropout: &mut DropoutCtx<'_>,
) -> Result<NodeId> {
    let prefix = format!("enc{block}");
    let mha = MultiHeadIds {
        heads: params.attention_heads(&format!("{prefix}.mha"), spec.num_heads),
        output_proj: params.id(&format!("{prefix}.mha.out_proj")),
    };
    let attended = multi_head_self_attention(tape, &mha, input)?;
    let residual = tape.add(input, attended.output)?;
    let normed = tape.layernorm(
        residual,
        params.id(&format!("{prefix}.ln1.gain")),
        params.id(&format!("{prefix}.ln1.bias")),
        LAYERNORM_EPS,
    )?;

    let expanded = tape.matmul(normed, params.id(&format!("{prefix}.ffn.w1")))?;
    let expanded = tape.add_row_bias(expanded, params.id(&format!("{prefix}.ffn.b1")))?;
    let activated = tape.gelu(expanded);
    let contracted = tape.matmul(activated, params.id(&format!("{prefix}.ffn.w2")))?;
    let mut ffn = tape.add_row_bias(contracted, params.id(&format!("{prefix}.ffn.b2")))?;
    if let Some((rate, rng)) = dropout.as_mut() {
        ffn = tape.dropout(ffn, *rate, rng)?;
    }
    let residual = tape.add(normed, ffn)?;
    tape.layernorm(
        residual,
        params.id(&format!("{prefix}.ln2.gain")),
        params.id(&format!("{prefix}.ln2.bias")),
        LAYERNORM_EPS,
    )
}

/// Pass the dropout context down without consuming it.
fn reborrow<'b>(ctx: &'b mut DropoutCtx<'_>) -> Option<(f64, &'b mut ChaCha8Rng)> {
    ctx.as_mut().map(|(rate, rng)| (*rate, &mut **rng))
}
