use thiserror::Error;

/// Errors produced by the numeric core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("grid too small: {n} points per axis, need at least {min}")]
    GridTooSmall { n: usize, min: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
}

impl Error {
    pub fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
