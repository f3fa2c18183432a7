//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dynamics, filtering, simulation, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite or dimensionally inconsistent joint state / input.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Mass matrix is numerically singular (condition number above 1e12).
    #[error("singular dynamics: mass matrix condition number {cond:.3e}")]
    SingularDynamics { cond: f64 },

    /// Invalid parameters, malformed scenario/arm files, mismatched banks.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite measurement fed to a filter, estimator, or observer.
    #[error("measurement error: {0}")]
    Measurement(String),

    /// Closed-loop simulation blew up.
    #[error("simulation diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    /// Two reports cannot be compared (different scenario or joint count).
    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("file error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
