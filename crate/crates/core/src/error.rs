use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid spectral measure: {0}")]
    InvalidMeasure(String),

    #[error("covariance is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("non-finite value encountered: {0}")]
    DomainError(String),

    #[error("{what} did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { what: &'static str, iterations: usize, last_change: f64 },

    #[error("no critical point of the bulk-edge function found on (edge, {alpha_max:e}]")]
    NoCriticalPoint { alpha_max: f64 },

    #[error("lambda = {lambda} is at or below the weak-recovery threshold {threshold}")]
    BelowThreshold { lambda: f64, threshold: f64 },

    #[error("AMP diverged at iteration {iteration} (norm {norm:e})")]
    Diverged { iteration: usize, norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
