use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, found {found:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("backward called before evaluate")]
    NotEvaluated,

    #[error("backward root has shape {shape:?}; a non-scalar root needs an explicit seed")]
    NonScalarRoot { shape: Vec<usize> },

    #[error("missing graph input `{0}`")]
    MissingInput(String),

    #[error("unknown graph input `{0}`")]
    UnknownInput(String),

    #[error("duplicate graph input `{0}`")]
    DuplicateInput(String),

    #[error("cluster {column} received zero total probability mass")]
    DegenerateCluster { column: usize },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("zero-norm vector at row {row}; cosine is undefined")]
    ZeroNorm { row: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: i64, classes: usize },

    #[error("KL support violation at row {row}, column {column}: q > 0 but p = 0")]
    SupportViolation { row: usize, column: usize },

    #[error("labels required: {0}")]
    MissingLabels(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors that indicate numerical breakdown during training.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::DegenerateCluster { .. } | Error::SupportViolation { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
