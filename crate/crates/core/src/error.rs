use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::RecordKey;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{context}: dimension mismatch, expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("{context}: duplicate record {key}")]
    DuplicateRecord { context: String, key: RecordKey },

    #[error("{context}: non-finite component at index {index}")]
    NonFinite { context: String, index: usize },

    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),

    #[error("bad magic: expected ATK1, found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("truncated payload: expected at least {expected} bytes, file has {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("unknown prompt {0:?}")]
    UnknownPrompt(String),

    #[error("unknown model {0:?}")]
    UnknownModel(String),

    #[error("prompt {prompt_id:?}, model {model_id:?}: {needed} records required, {available} available")]
    InsufficientRecords {
        prompt_id: String,
        model_id: String,
        needed: usize,
        available: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the underlying filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
