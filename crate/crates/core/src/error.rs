use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("incompatible oracle/objective: {0}")]
    Incompatible(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("near-critical search failed: {0}")]
    SearchFailure(String),

    #[error("trajectory aborted at step {step}: {reason}")]
    TrajectoryAbort { step: u64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing run output: {0}")]
    MissingOutput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
