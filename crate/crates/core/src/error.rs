use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VeriflowError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VeriflowError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unknown label {0:?} (expected false, half-true or true)")]
    UnknownLabel(String),

    #[error("duplicate claim id {0:?}")]
    DuplicateClaim(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("dataset failed validation with {0} error finding(s)")]
    Validation(usize),

    #[error("need at least {needed} debates in the train split, found {found}")]
    TooFewDebates { needed: usize, found: usize },

    #[error("class {0} has no examples")]
    MissingClass(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing feature view {0:?}")]
    MissingView(String),

    #[error("training failed in {context}: {message}")]
    Training { context: String, message: String },

    #[error("config error: {0}")]
    Config(String),
}

impl VeriflowError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VeriflowError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        VeriflowError::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        VeriflowError::InvalidArgument(message.into())
    }

    /// Attach a context prefix to a training failure, leaving other kinds untouched.
    pub fn in_context(self, context: &str) -> Self {
        match self {
            VeriflowError::Training {
                context: inner,
                message,
            } => VeriflowError::Training {
                context: format!("{context}: {inner}"),
                message,
            },
            other => other,
        }
    }
}
