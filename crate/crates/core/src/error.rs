use std::path::PathBuf;

use crate::coupled::Trajectory;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("robin coefficient outside the admissible band: {0}")]
    Admissibility(String),

    #[error("conjugate gradient stalled: relative residual {residual:.3e} after {iters} iterations")]
    LinearSolve { residual: f64, iters: usize },

    #[error("fixed-point iteration did not converge: relative update {update:.3e} after {iters} iterations")]
    FixedPoint { update: f64, iters: usize },

    #[error("micro/macro coupling did not converge: residual {residual:.3e} after {iters} iterations")]
    Coupling { residual: f64, iters: usize },

    #[error("simulation failed at step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<Error>,
        /// Whatever was computed before the failure, flushed with the error.
        partial: Box<Trajectory>,
    },

    #[error("line search stagnated: {0}")]
    Stagnation(String),

    #[error("model assumptions violated: {0}")]
    Assumptions(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
