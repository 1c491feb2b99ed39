use thiserror::Error;

/// Failure modes shared across the library.
///
/// `Domain` marks mathematically invalid inputs, `Precondition` marks broken
/// caller contracts on otherwise well-formed data, and `Optimizer` marks a
/// scalar search that hit non-finite objective values.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("truncation insufficient: cutoff {given} given, {required} required")]
    Truncation { required: usize, given: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
