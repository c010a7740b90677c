use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network specification: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite gradient in parameter block {name}")]
    NonFiniteGradient { name: String },

    #[error("non-finite training loss at epoch {epoch} (batch size {batch}, learning rate {lr:e})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },

    #[error("PSNR is undefined for a constant target (value range zero)")]
    DegenerateTarget,

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] tttk_core::Error),
}

impl NnError {
    pub(crate) fn shape(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        NnError::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for failures of a numerical method rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            NnError::NonFiniteGradient { .. } | NnError::NonFiniteLoss { .. } => true,
            NnError::Core(e) => e.is_numerical(),
            _ => false,
        }
    }
}
