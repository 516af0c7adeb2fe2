//! Error type shared across the pipeline.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers (notably the CLI exit-code
/// mapping) to group failures without matching every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or unreadable input data.
    Parse,
    /// Inconsistent configuration or mismatched artifacts.
    Config,
    /// Numerical failure at runtime (divergence, non-finite values).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported sample depth: maxval {0} (expected 65535)")]
    UnsupportedMaxval(u32),

    #[error("mosaic dimensions must be even and nonzero, got {width}x{height}")]
    OddDimensions { width: usize, height: usize },

    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("unknown CFA pattern {0:?} (only RGGB is supported)")]
    UnknownPattern(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("batch normalization needs at least 2 values per channel in train mode")]
    DegenerateBatch,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("{what} = {value:e} exceeds limit {limit:e}")]
    ToleranceExceeded { what: String, value: f64, limit: f64 },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_)
            | Error::Parse(_)
            | Error::UnsupportedMaxval(_)
            | Error::OddDimensions { .. }
            | Error::Truncated { .. }
            | Error::UnknownPattern(_)
            | Error::Shape(_) => ErrorClass::Parse,
            Error::Config(_) | Error::DegenerateBatch => ErrorClass::Config,
            Error::NonFinite(_) | Error::Diverged { .. } | Error::ToleranceExceeded { .. } => {
                ErrorClass::Numerical
            }
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("json: {e}"))
    }
}
