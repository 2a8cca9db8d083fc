//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor contained NaN or Inf where finite values are required.
    /// Carries the first offending index for diagnosis.
    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    /// A contract violation on an argument value (negative threshold,
    /// gate outside [0, 1], out-of-range coefficient, bad dimensions, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Scene synthesis could not place the requested targets.
    #[error("target placement failed after {attempts} attempts")]
    Placement { attempts: usize },

    /// Training loss became non-finite.
    #[error("training diverged: non-finite loss at step {step}")]
    Divergence { step: usize },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    /// Malformed or truncated file contents.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(context: &str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.to_string(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub fn non_finite(context: &str, index: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.to_string(),
            index: index.into(),
        }
    }
}
