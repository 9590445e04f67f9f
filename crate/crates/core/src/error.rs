use thiserror::Error;

/// Errors raised while constructing descriptors or running the direct method.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("handle mismatch: {0}")]
    HandleMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("divergent control: {0}")]
    DivergentControl(String),

    #[error("operation requires {0}")]
    Unsupported(&'static str),

    #[error("conjugate-linear contamination {residual:.3e} exceeds allowance {allowance:.3e}")]
    ConjugateLinearContamination { residual: f64, allowance: f64 },

    #[error("overflow materializing 2^{exponent} scaled value")]
    Overflow { exponent: i32 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
