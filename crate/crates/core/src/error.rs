use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid adapter spec: {0}")]
    InvalidSpec(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: bad IDX magic {found:#010x}, expected {expected:#010x}")]
    IdxMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated IDX payload ({reason})")]
    IdxTruncated { path: PathBuf, reason: String },

    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("bank entry `{0}` already exists")]
    DuplicateEntry(String),

    #[error("bank entry `{0}` not found")]
    MissingEntry(String),

    #[error("{path}: corrupt checkpoint ({reason})")]
    CorruptCheckpoint { path: PathBuf, reason: String },

    #[error("degenerate features: {0}")]
    DegenerateFeatures(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("backbone selection failed: {0}")]
    SelectionFailed(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("training failed at iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("task {index} failed: {source}")]
    Task {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    /// True for failures caused by bad input or configuration rather than
    /// a numerical or internal fault.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::NonFinite { .. } => false,
            Error::Training { source, .. } | Error::Task { source, .. } => source.is_user_error(),
            _ => true,
        }
    }
}
