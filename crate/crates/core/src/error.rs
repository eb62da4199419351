use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample at node {index} (value {value})")]
    NonFinite { index: usize, value: f64 },

    #[error("field belongs to a different grid")]
    GridMismatch,

    #[error("shift projection failed: {0}")]
    Projection(String),

    #[error("mass constraint violated: |mass| = {mass:e} exceeds {tol:e}")]
    Mass { mass: f64, tol: f64 },

    #[error("orthogonality to the translation mode violated: |<f, v_cz>| = {value:e}")]
    Orthogonality { value: f64 },

    #[error("field too large near the z-boundary: sup = {sup:e} (limit {limit:e})")]
    Window { sup: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("run aborted at t = {t}: {reason}{}", checkpoint.as_ref().map(|p| format!(" (last checkpoint {})", p.display())).unwrap_or_default())]
    Abort {
        t: f64,
        reason: String,
        checkpoint: Option<PathBuf>,
    },

    #[error("kernel cutoff: {0}")]
    Cutoff(String),

    #[error("Picard iteration is not contracting (increment {prev:e} -> {next:e} at iteration {iteration}); reduce T0 or the size of f0")]
    NonContraction { iteration: usize, prev: f64, next: f64 },

    #[error("fit: {0}")]
    Fit(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("internal: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
