use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature failed for {what} at x = {x}: error estimate {error:.3e} exceeds tolerance {tolerance:.3e}")]
    Quadrature {
        what: &'static str,
        x: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("spectral sum rule violated at x = {x}: integral = {value:.12} (tolerance {tolerance:.1e})")]
    SumRule { x: f64, value: f64, tolerance: f64 },

    #[error("damping at x = {x}: analytic {analytic:.6e} and finite-difference {finite_difference:.6e} disagree")]
    DampingMismatch {
        x: f64,
        analytic: f64,
        finite_difference: f64,
    },

    #[error("integration diverged at step {step}: x = {x}, v = {v}")]
    NonFiniteState { step: u64, x: f64, v: f64 },

    #[error("lag {max_lag} exceeds half the record length {len}")]
    LagTooLarge { max_lag: usize, len: usize },

    #[error("{outside} of {total} samples fall outside the phase-space grid")]
    SamplesOutsideGrid { outside: u64, total: u64 },

    #[error("tail population p[{n_max}] = {tail:.3e} does not satisfy the truncation criterion")]
    Truncation { n_max: usize, tail: f64 },

    #[error("g2(0) is undefined for the vacuum state")]
    VacuumCoherence,

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
