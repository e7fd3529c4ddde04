use std::path::PathBuf;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum SohError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("input sequence is empty")]
    EmptySequence,

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("{0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SohError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SohError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SohError>;
