use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the calibration pipeline and its building blocks.
#[derive(Debug, Error)]
pub enum CtadError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("line {line}, column {column} ({name}): cannot parse {value:?} as a number")]
    NonNumeric {
        line: u64,
        column: usize,
        name: String,
        value: String,
    },

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },

    #[error("line {line}, column {column}: label {value:?} is not 0 or 1")]
    BadLabel { line: u64, column: usize, value: String },

    #[error("line {line}, column {column}: non-finite value {value}")]
    NonFinite { line: u64, column: usize, value: f64 },

    #[error("label column {0} not found")]
    MissingLabelColumn(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{what} must be in [{min}, {max}], got {got}")]
    OutOfRange {
        what: &'static str,
        got: usize,
        min: usize,
        max: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} scores vs {right} rows")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need both classes present ({positives} positives, {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CtadError> = std::result::Result<T, E>;

impl CtadError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CtadError::Io {
            path: path.into(),
            source,
        }
    }
}
