use std::io;

use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum XqcError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numeric overflow at node `{node}`")]
    NumericOverflow { node: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate weight matrix `{layer}` (zero Frobenius norm)")]
    DegenerateWeight { layer: String },

    #[error("dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("degenerate spectrum: all Ritz values below {0:e}")]
    DegenerateSpectrum(f64),

    #[error("refused: {0}")]
    Refused(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, XqcError>;

pub(crate) fn shape_err(context: &str, expected: impl ToString, actual: impl ToString) -> XqcError {
    XqcError::Shape {
        context: context.to_string(),
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
