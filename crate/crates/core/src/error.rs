use thiserror::Error;

/// Errors raised by the bundle solver and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cut retention policy infeasible: {mandatory} mandatory cuts exceed the cap of {cap}")]
    PolicyInfeasible { mandatory: usize, cap: usize },

    #[error("prox subproblem did not converge after {iterations} iterations (residual {residual:.3e})")]
    QpConvergence { iterations: usize, residual: f64, best_z: Vec<f64> },

    #[error("unsupported dimension {0} (brute force supports at most 3)")]
    UnsupportedDimension(usize),

    #[error("oracle failure at the point {point:?}: {reason}")]
    Oracle { point: Vec<f64>, reason: String },

    #[error("unknown problem '{name}'; available: {available}")]
    UnknownProblem { name: String, available: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("accuracy {target:.3e} not reached; best value {best:.17e} with certified gap {gap:.3e}")]
    AccuracyNotReached { target: f64, best: f64, gap: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
