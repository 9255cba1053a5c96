//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Input contains NaN or infinite entries.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// A model construction argument is invalid.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The instance sits on a region boundary; the caller may jitter and retry.
    #[error("instance lies on a region boundary")]
    Boundary,

    /// A probability is too extreme for stable log-odds computation.
    #[error("saturated prediction: {context}")]
    Saturated { context: String },

    /// The coefficient matrix is numerically singular.
    #[error("singular equation system (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },

    /// Too few usable samples survived filtering.
    #[error("insufficient samples: {got} usable, {needed} needed")]
    InsufficientSamples { needed: usize, got: usize },

    /// Cosine similarity of a zero vector is undefined.
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    /// The query budget of a ledger has been exhausted.
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },

    /// The remote endpoint could not be reached; retrying may help.
    #[error("transport failure: {0}")]
    Transport(String),

    /// The remote endpoint answered, but not with the expected protocol.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Experiment configuration is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures worth retrying, currently only transport errors.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
