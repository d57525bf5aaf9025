use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON at line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("missing field '{field}' at line {line}")]
    MissingField { field: String, line: usize },

    #[error("duplicate document id '{0}'")]
    DuplicateId(String),

    #[error("invalid entity in document '{doc}': {reason}")]
    InvalidEntity { doc: String, reason: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },

    #[error("contract violation from {endpoint}: {message}")]
    Contract { endpoint: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stale span {start}..{end}: expected '{expected}', found '{found}'")]
    StaleSpan {
        start: usize,
        end: usize,
        expected: String,
        found: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("entity {0} has no scores")]
    Unscored(usize),

    #[error("entity index {index} out of range for {len} entities")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no calibration signal: every critical set is empty")]
    NoCalibrationSignal,

    #[error("instance has {n} items; exhaustive search supports at most {max}, use the greedy path")]
    TooLarge { n: usize, max: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("empty index")]
    EmptyIndex,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
