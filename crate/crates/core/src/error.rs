use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GreadError>;

#[derive(Debug, Error)]
pub enum GreadError {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing operator: {0}")]
    MissingOperator(&'static str),

    #[error("non-finite state at step {step}{context}")]
    Divergence { step: usize, context: String },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GreadError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        GreadError::Shape(msg.into())
    }

    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        GreadError::Structure(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        GreadError::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        GreadError::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GreadError::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes extra context onto a divergence error; other variants pass through.
    pub fn with_context(self, ctx: &str) -> Self {
        match self {
            GreadError::Divergence { step, context } => GreadError::Divergence {
                step,
                context: format!("{context} ({ctx})"),
            },
            other => other,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            GreadError::Divergence { .. } | GreadError::NonFiniteGradient(_)
        )
    }
}
