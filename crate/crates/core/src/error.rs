use std::path::PathBuf;

/// Errors produced by the expansion, solver and data-generation routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("column {index} ({label}) has zero norm")]
    DegenerateColumn { index: usize, label: String },

    #[error("coefficient scale {theta:?} does not match design scale {design:?}")]
    ScaleMismatch {
        theta: crate::design::Scale,
        design: crate::design::Scale,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("iteration diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("singular value decomposition failed")]
    Svd,

    #[error("malformed matrix file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
