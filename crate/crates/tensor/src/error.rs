use thiserror::Error;

/// Errors surfaced by tensor construction and graph operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {details}")]
    Shape { op: &'static str, details: String },

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },
}

impl TensorError {
    pub fn shape(op: &'static str, details: impl Into<String>) -> Self {
        TensorError::Shape { op, details: details.into() }
    }

    pub fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Invalid { op, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;
