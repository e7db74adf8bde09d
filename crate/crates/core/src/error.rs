//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value or configuration violated a documented invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Tensor or image dimensions are incompatible.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// File could not be read or written.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// File exists but is not in a supported encoding.
    #[error("unsupported format for {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Boundary tracing could not recover enough valid columns.
    #[error("tracing failed: {0}")]
    TracingFailed(String),

    /// A pipeline stage aborted; earlier artifacts may be stale.
    #[error("stage `{stage}` failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn stage(stage: &'static str, message: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: validation problems exit 2, stage
    /// failures exit 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Shape(_) | Error::Format { .. } => 2,
            Error::Io { .. } | Error::TracingFailed(_) | Error::Stage { .. } => 3,
        }
    }
}
