use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("missing sample_index in {file}: {indices:?}")]
    MissingIndices { file: String, indices: Vec<u64> },

    #[error("{file}: row {row}, column {column}: cannot parse {value:?} as a number")]
    Parse {
        file: String,
        row: usize,
        column: String,
        value: String,
    },

    #[error("class {class} has {available} labeled samples in the training split, {requested} requested")]
    InsufficientLabels {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("non-finite loss at step {step}: {breakdown}")]
    NonFiniteLoss { step: usize, breakdown: String },

    #[error("unknown modality {0:?}")]
    UnknownModality(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("grid cell {cell} failed: {source}")]
    GridCell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::Input(_) => "input",
            Error::Data(_) => "data",
            Error::MissingIndices { .. } => "missing_indices",
            Error::Parse { .. } => "parse",
            Error::InsufficientLabels { .. } => "insufficient_labels",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::UnknownModality(_) => "unknown_modality",
            Error::Checkpoint(_) => "checkpoint",
            Error::GridCell { .. } => "grid_cell",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
