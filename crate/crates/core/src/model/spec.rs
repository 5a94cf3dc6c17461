use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Convolution kernel size used by the TCN's two causal layers.
pub const TCN_KERNEL_SIZE: usize = 3;

/// The seven forecasting architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "Transformer")]
    Transformer,
    #[serde(rename = "AttentionLSTM")]
    AttentionLstm,
    #[serde(rename = "MultiHeadAttentionLSTM")]
    MultiHeadAttentionLstm,
    #[serde(rename = "Informer")]
    Informer,
    #[serde(rename = "TCN")]
    Tcn,
    #[serde(rename = "TFT")]
    Tft,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Lstm,
        ModelKind::Transformer,
        ModelKind::AttentionLstm,
        ModelKind::MultiHeadAttentionLstm,
        ModelKind::Informer,
        ModelKind::Tcn,
        ModelKind::Tft,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Lstm => "LSTM",
            ModelKind::Transformer => "Transformer",
            ModelKind::AttentionLstm => "AttentionLSTM",
            ModelKind::MultiHeadAttentionLstm => "MultiHeadAttentionLSTM",
            ModelKind::Informer => "Informer",
            ModelKind::Tcn => "TCN",
            ModelKind::Tft => "TFT",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let canon = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Ok(match canon.as_str() {
            "lstm" => ModelKind::Lstm,
            "transformer" => ModelKind::Transformer,
            "attentionlstm" => ModelKind::AttentionLstm,
            "multiheadattentionlstm" | "mhalstm" => ModelKind::MultiHeadAttentionLstm,
            "informer" => ModelKind::Informer,
            "tcn" => ModelKind::Tcn,
            "tft" => ModelKind::Tft,
            _ => {
                return Err(Error::Config(format!(
                    "unknown model kind `{s}` (expected one of LSTM, Transformer, AttentionLSTM, \
                     MultiHeadAttentionLSTM, Informer, TCN, TFT)"
                )))
            }
        })
    }
}

/// Architecture selection plus every structural hyperparameter needed to
/// reconstruct the parameter inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Input window length in trading days.
    pub past_history: usize,
    /// Days predicted per emission.
    pub forward_look: usize,
    pub hidden_dim: usize,
    pub ff_dim: usize,
    pub num_heads: usize,
    pub num_encoder_layers: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelSpec {
    /// Shared defaults: 60-day window, one-day horizon, hidden 64,
    /// feed-forward 128, 4 heads, 2 encoder layers, dropout 0.1.
    pub fn with_defaults(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            past_history: 60,
            forward_look: 1,
            hidden_dim: 64,
            ff_dim: 128,
            num_heads: 4,
            num_encoder_layers: 2,
            dropout: 0.1,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.past_history < 2 {
            return Err(Error::Config(format!(
                "past_history must be >= 2, got {}",
                self.past_history
            )));
        }
        if self.forward_look < 1 {
            return Err(Error::Config("forward_look must be >= 1".into()));
        }
        if self.hidden_dim < 1 || self.ff_dim < 1 || self.num_encoder_layers < 1 {
            return Err(Error::Config("hidden_dim, ff_dim, num_encoder_layers must be >= 1".into()));
        }
        if self.num_heads < 1 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "num_heads ({}) must divide hidden_dim ({})",
                self.num_heads, self.hidden_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Key dimension per attention head.
    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    /// Closed-form total parameter count for this spec.
    pub fn parameter_count(&self) -> usize {
        let d = self.hidden_dim;
        let h = self.forward_look;
        let k = self.past_history;
        let ff = self.ff_dim;
        let lstm = |d_in: usize| 4 * (d_in * d + d * d + d);
        let head = d * h + h;
        let mha_heads = 3 * d * d; // H heads of 3 [d, d/H] projections
        let encoder_block = mha_heads + d * d // attention + output projection
            + 2 * d // first layernorm
            + (d * ff + ff + ff * d + d) // feed-forward
            + 2 * d; // second layernorm
        match self.kind {
            ModelKind::Lstm => lstm(1) + lstm(d) + head,
            ModelKind::AttentionLstm => lstm(1) + lstm(d) + (2 * d * d + d) + head,
            ModelKind::MultiHeadAttentionLstm => {
                lstm(1) + lstm(d) + mha_heads + d * d + head
            }
            ModelKind::Tcn => {
                (TCN_KERNEL_SIZE * d + d) + (TCN_KERNEL_SIZE * d * d + d) + head
            }
            ModelKind::Informer => {
                2 * d + self.num_encoder_layers * encoder_block + head
            }
            ModelKind::Transformer => {
                2 * d + self.num_encoder_layers * encoder_block + head + k * d
            }
            ModelKind::Tft => {
                lstm(1) + lstm(d) + mha_heads + 2 * d + (d * d + d) + head
            }
        }
    }
}
