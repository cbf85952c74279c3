use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum HandaError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite {what} at outer iteration {iter}")]
    NonFinite { what: String, iter: usize },

    #[error("non-finite gradient entry in {0}")]
    NonFiniteGradient(String),

    #[error("{path}:{line}: {msg}")]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<HandaError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HandaError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        HandaError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        HandaError::Contract(msg.into())
    }

    /// Prefixes the message with `context`, keeping the category.
    pub fn context(self, context: impl Into<String>) -> Self {
        HandaError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Coarse category used for process exit codes and FFI status codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            HandaError::Shape { .. } | HandaError::Contract(_) => ErrorKind::Contract,
            HandaError::Degenerate(_) => ErrorKind::Numeric,
            HandaError::NonFinite { .. } | HandaError::NonFiniteGradient(_) => ErrorKind::Numeric,
            HandaError::Format { .. } | HandaError::Io { .. } => ErrorKind::Data,
            HandaError::Context { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Contract,
    Data,
    Numeric,
}

pub type Result<T> = std::result::Result<T, HandaError>;
