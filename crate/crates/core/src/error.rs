use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("fast sweeping did not converge after {sweeps} sweeps (last residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("forward solve for source {index} failed: {source}")]
    SourceFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {index} failed: {source}")]
    SampleFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("kernel quadrature with n_quad = {n_quad} skips polar cells; use a larger n_quad")]
    CellSkipping { n_quad: usize },

    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("ellipse sampling gave up after {attempts} rejected attempts; use fewer or smaller ellipses")]
    SamplingExhausted { attempts: usize },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotConverged { .. }
            | Error::CgNotConverged { .. }
            | Error::CellSkipping { .. }
            | Error::SamplingExhausted { .. } => true,
            Error::SourceFailed { source, .. } | Error::SampleFailed { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}
