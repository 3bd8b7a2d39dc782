use std::path::PathBuf;

use thiserror::Error;

use crate::em::TrajectoryKind;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("zero prediction (Hx + b) at pixel {index} in iteration {iteration}")]
    Singularity { iteration: usize, index: usize },

    #[error("non-finite value in the {trajectory} trajectory at iteration {iteration}")]
    NumericalFailure {
        trajectory: TrajectoryKind,
        iteration: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the iteration itself rather than of its inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singularity { .. } | Error::NumericalFailure { .. } | Error::AllTrialsFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
