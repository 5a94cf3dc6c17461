use thiserror::Error;

/// Crate-wide error type. Variants map 1:1 onto the machine-readable
/// error kinds surfaced by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An API contract was violated (non-scalar loss, double backward, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration (bad hyperparameter, head count not dividing
    /// the hidden dimension, unknown model kind, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Mathematical domain error (empty reduction axis, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input file does not match the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// Structurally valid input with bad content (duplicate dates, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Not enough observations for the requested window/split geometry.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Training slice has (near-)zero variance; z-scoring is undefined.
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    /// A gradient went non-finite during training. Training aborts rather
    /// than silently clipping.
    #[error("non-finite gradient in parameter `{param}` at step {step}")]
    NonFiniteGradient { param: String, step: u64 },

    /// Checkpoint/spec disagreement or a malformed checkpoint container.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable kind string used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Format(_) => "format",
            Error::Data(_) => "data",
            Error::InsufficientData(_) => "insufficient-data",
            Error::DegenerateSeries(_) => "degenerate-series",
            Error::NonFiniteGradient { .. } => "non-finite-gradient",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
