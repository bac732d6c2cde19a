use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] rvid_tensor::TensorError),

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{0}")]
    Format(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),

    #[error("parameter `{0}` not found")]
    MissingParam(String),

    #[error("store is already fused: {0}")]
    AlreadyFused(String),

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: usize },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
