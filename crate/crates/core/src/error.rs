use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown class label {label:?}")]
    UnknownLabel { line: usize, label: String },

    #[error("no embedding for video {video}, frame {frame}, person {person}, site {site}")]
    MissingEmbedding {
        video: u64,
        frame: u64,
        person: u64,
        site: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("need at least {needed} samples to fit {needed} clusters, got {got}; try a smaller K")]
    TooFewSamples { needed: usize, got: usize },

    #[error("video {0}: no usable person after filtering")]
    NoPersons(u64),

    #[error("malformed {kind} file: {message}")]
    Format { kind: &'static str, message: String },

    #[error("checkpoint does not match the current configuration: {0}")]
    ConfigMismatch(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(kind: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            kind,
            message: message.into(),
        }
    }
}
