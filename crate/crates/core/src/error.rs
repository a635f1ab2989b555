use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor extent does not match what the operation requires.
    #[error("dimension error in {context}: axis {axis} expected {expected}, got {actual}")]
    Dimension {
        context: String,
        axis: String,
        expected: usize,
        actual: usize,
    },

    #[error("shape error in {context}: {message}")]
    Shape { context: String, message: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("signal too short in {context}: need {required} samples, got {actual}")]
    Length {
        context: String,
        required: usize,
        actual: usize,
    },

    #[error("missing channels: {}", .0.join(", "))]
    MissingChannels(Vec<String>),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("taxonomy error: class {0:?} has no sub-part mapping")]
    Taxonomy(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss {loss} (initial {initial})")]
    Divergence { epoch: usize, loss: f64, initial: f64 },

    #[error("checksum mismatch: manifest {expected:016x}, payload {actual:016x}")]
    Checksum { expected: u64, actual: u64 },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(
        context: impl Into<String>,
        axis: impl Into<String>,
        expected: usize,
        actual: usize,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            axis: axis.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Checksum { .. }
            | Error::Version { .. }
            | Error::Truncated { .. }
            | Error::Format { .. } => 2,
            Error::Divergence { .. } | Error::NonFinite(_) => 4,
            _ => 3,
        }
    }
}
