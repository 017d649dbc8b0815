use thiserror::Error;

/// Errors raised by the estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what}: expected width {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("coordinate index {index} out of range for dimension {dim}")]
    InvalidIndex { index: usize, dim: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("not enough rows: need {needed}, have {available}")]
    InsufficientRows { needed: usize, available: usize },
    #[error("training diverged for node {k} at epoch {epoch} (non-finite loss)")]
    Diverged { k: usize, epoch: usize },
    #[error("every regularization value diverged for node {k}")]
    AllDiverged { k: usize },
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },
    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("column {column} is constant")]
    ConstantColumn { column: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_index(index: usize, dim: usize) -> Result<()> {
    if index >= dim {
        Err(Error::InvalidIndex { index, dim })
    } else {
        Ok(())
    }
}

pub(crate) fn check_width(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    } else {
        Ok(())
    }
}
