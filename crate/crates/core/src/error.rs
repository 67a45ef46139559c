//! Error type shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("field index {index} out of range (table has {len} fields)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("field '{0}' is not numeric")]
    NotNumeric(String),

    #[error("no records given")]
    EmptyRecordSet,

    #[error("no mapping for intent/focus pair {0}")]
    UnknownPair(String),

    #[error("data focus {focus} does not apply to a {ftype} field")]
    FocusTypeMismatch { focus: String, ftype: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("corpus too small: {0} labeled examples (need at least 10)")]
    CorpusTooSmall(usize),

    #[error("model has not been trained")]
    UntrainedModel,

    #[error("table has no fields")]
    EmptyTable,

    #[error("table has no numeric field to use as a y-axis")]
    NoNumericField,

    #[error("prediction and gold keys differ: {0}")]
    KeyMismatch(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
