use thiserror::Error;

/// Errors surfaced by the forecasting library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
