use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{op}: shape mismatch between {left_rows}x{left_cols} and {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("field {field}: bucket {bucket} out of range (table has {rows} rows)")]
    BucketOutOfRange {
        field: usize,
        bucket: usize,
        rows: usize,
    },

    #[error("example does not match the model schema: {0}")]
    SchemaMismatch(String),

    #[error("non-finite gradient in parameter group `{group}`")]
    NonFiniteGradient { group: String },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("score {0} is not finite")]
    NonFiniteScore(f64),

    #[error("AUC is undefined without both positive and negative labels")]
    SingleClass,
}

pub type Result<T> = std::result::Result<T, Error>;
