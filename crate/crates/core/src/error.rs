use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid network structure: {0}")]
    Structure(String),

    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("invalid certificate structure: {0}")]
    CertificateStructure(String),

    #[error("cannot interpolate: {0}")]
    CannotInterpolate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("soundness check failed: {0}")]
    Soundness(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("IDX bad magic number {found:#010x} (expected {expected:#010x})")]
    IdxMagic { expected: u32, found: u32 },

    #[error("IDX payload truncated: need {needed} bytes, have {available}")]
    IdxTruncated { needed: usize, available: usize },

    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("CSV parse error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
