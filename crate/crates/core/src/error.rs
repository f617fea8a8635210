use std::path::PathBuf;

/// Errors raised by roadmap construction, planning, and the supporting models.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("illegal action: {0}")]
    IllegalAction(String),

    #[error("inconsistent record: {0}")]
    InvalidRecord(String),

    #[error("separation target not reached after {iterations} iterations (min distance {achieved:.4} < {target}); try a larger latent_dim")]
    SeparationFailed {
        iterations: usize,
        achieved: f64,
        target: f64,
    },

    #[error("roadmap empty; lower min_samples")]
    EmptyRoadmap,

    #[error("non-finite loss at step {step}; try a smaller step_size")]
    Diverged { step: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
