//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{context}: invalid argument: {detail}")]
    InvalidArgument { context: &'static str, detail: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("training diverged: {context}")]
    Divergence { context: String },

    #[error("wrong channel domain: expected {expected}, got {got}")]
    WrongDomain { expected: &'static str, got: &'static str },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("input hash mismatch for {path}: manifest chain is broken")]
    HashMismatch { path: String },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(context: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            context,
            detail: detail.into(),
        }
    }
}
