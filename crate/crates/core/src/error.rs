use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied parameters or configuration documents.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated a function contract (length mismatch and similar).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by the caller's inputs rather than by a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}
