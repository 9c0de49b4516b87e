use thiserror::Error;

use crate::spectral::Regime;

/// Errors raised by the synthesis, certification and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode index {index} is not valid for the {regime:?} regime")]
    InvalidIndex { index: usize, regime: Regime },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("observability lost: {0}")]
    Observability(String),

    #[error("controllability lost: {0}")]
    Controllability(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("Lyapunov operator is singular (eigenvalue pair sums to zero)")]
    DegenerateLyapunov,

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("LMI infeasible at the upper bracket gamma = {gamma}")]
    InfeasibleAtUpper { gamma: f64 },

    #[error("solver could not decide a required certificate: {0}")]
    Indeterminate(String),

    #[error("numerical abort at t = {time}: {reason}")]
    NumericalAbort { time: f64, reason: String },

    #[error("quadrature did not converge (panel-doubling difference {0:e})")]
    Quadrature(f64),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
