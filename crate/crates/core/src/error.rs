use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum NgfaError {
    /// An argument lies outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid hyperparameters, options or dataset shape.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller asked for something the inputs cannot support.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed or inconsistent data on disk.
    #[error("data error: {0}")]
    Data(String),

    /// A coordinate update produced a non-finite value.
    #[error("numerical failure at {context}: {message}")]
    Numerical { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl NgfaError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        NgfaError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        NgfaError::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        NgfaError::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        NgfaError::Data(msg.into())
    }

    pub(crate) fn numerical(context: impl Into<String>, message: impl Into<String>) -> Self {
        NgfaError::Numerical {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NgfaError>;
