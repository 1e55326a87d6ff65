//! Error types shared across the toolkit.

use std::path::PathBuf;

/// Toolkit-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A mapped column is absent from the input header.
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    /// A data row failed validation. Rows are numbered from 1, excluding the header.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    /// An operation received an argument outside its contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration is incomplete or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// The detector could not be trained.
    #[error("training error: {0}")]
    Training(String),

    /// A metric is undefined for the given inputs (e.g. single-class labels).
    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    /// A stored model or artifact failed an integrity check.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// No vocabulary tokens survived the document-frequency filter.
    #[error("empty vocabulary: {0}")]
    EmptyVocabulary(String),

    /// A pipeline stage failed; carries the stage name for diagnostics.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// A report input named by the manifest is missing.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    /// An external adapter process failed.
    #[error("adapter `{name}` failed: {message}")]
    Adapter { name: String, message: String },

    /// A malformed line in a keyed-text artifact.
    #[error("{path}:{line}: {message}")]
    KeyedFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn row(row: usize, message: impl Into<String>) -> Self {
        Error::Row {
            row,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
