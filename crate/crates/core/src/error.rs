use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RidError>;

#[derive(Debug, Error)]
pub enum RidError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("label not binary: row {row} has value {value}")]
    LabelNotBinary { row: usize, value: String },
    #[error("non-numeric cell at row {row}, column {column:?}: {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("no usable splits")]
    NoUsableSplits,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("arity mismatch: expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("rashomon set too large: more than {limit} models (reached {count})")]
    RashomonSetTooLarge { limit: usize, count: usize },
    #[error("bootstrap {bootstrap}: {source}")]
    Bootstrap {
        bootstrap: usize,
        #[source]
        source: Box<RidError>,
    },
    #[error("rank deficient design matrix (pivot {pivot:e})")]
    RankDeficient { pivot: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl RidError {
    /// True when the error stems from a resource limit rather than bad input.
    pub fn is_resource(&self) -> bool {
        match self {
            RidError::RashomonSetTooLarge { .. } => true,
            RidError::Bootstrap { source, .. } => source.is_resource(),
            _ => false,
        }
    }
}
