use thiserror::Error;

use crate::time_iteration::SolveDiagnostics;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A utility or marginal utility was evaluated outside `(0, inf)`.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("failed to load model: {0}")]
    Load(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("spectral radius undefined on infinite entries")]
    InfiniteEntries,

    #[error("matrix is not square or has negative/NaN entries: {0}")]
    InvalidMatrix(String),

    #[error("expected marginal value is not finite at state {z} (offending transition z'={zhat}, shock={shock})")]
    NonFiniteExpectation { z: usize, zhat: usize, shock: usize },

    #[error("time iteration did not converge in {} iterations (last rho = {:e})", .0.iterations, .0.rho_history.last().copied().unwrap_or(f64::NAN))]
    NotConverged(Box<SolveDiagnostics>),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("no finite fixed point (iterate exceeded {0:e})")]
    NoFiniteFixedPoint(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no sign change in bracket [{lo:e}, {hi:e}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
