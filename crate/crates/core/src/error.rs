use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("header/schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("empty cell at row {row}, column '{column}'")]
    EmptyCell { row: usize, column: String },

    #[error("unparseable value '{value}' at row {row}, column '{column}'")]
    Unparseable {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown category '{value}' for '{column}'")]
    UnknownCategory { column: String, value: String },

    #[error("arity mismatch: expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("type mismatch at feature {index} ('{name}')")]
    TypeMismatch { index: usize, name: String },

    #[error("category out of vocabulary at feature {index} ('{name}')")]
    OutOfVocabulary { index: usize, name: String },

    #[error("non-finite value at feature {index} ('{name}')")]
    NonFinite { index: usize, name: String },

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("dataset has no target column{}", .0.as_ref().map(|n| format!(" '{n}'")).unwrap_or_default())]
    MissingTarget(Option<String>),

    #[error("unknown generator '{0}' (expected xor_mixed, moons2d or imbalanced_mixed)")]
    UnknownGenerator(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("label/row length mismatch: {rows} rows, {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },

    #[error("row {0} has no same-class peer")]
    NoPeer(usize),

    #[error("oversampling requires class labels, got a regression target")]
    RegressionOversampling,

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("precomputed oracle cannot label synthetic instances; rerun with `--smote-policy off`")]
    PrecomputedSynthetic,

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("task mismatch: {0}")]
    TaskMismatch(String),
}
