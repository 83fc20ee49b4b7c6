use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, dimensions or configuration keys.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument lies outside the domain of an oracle.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("subcritical spike: {value} does not exceed the phase-transition threshold {threshold}")]
    SubcriticalSpike { value: f64, threshold: f64 },

    #[error("degenerate factor signature: {0}")]
    DegenerateSignature(String),

    #[error("quantile inside point mass: alpha = {alpha} <= {mass} (mass of the atom at 0)")]
    QuantileInAtom { alpha: f64, mass: f64 },

    #[error("singular noise covariance: condition estimate {condition:.3e} exceeds 1e12")]
    Singular { condition: f64 },

    /// Root finding, quadrature or eigen-solver breakdown.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration and input problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular { .. } | Error::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
