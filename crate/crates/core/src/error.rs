use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("codebook of {entries} entries exceeds the budget of {budget} entries")]
    Capacity { entries: u128, budget: u128 },

    #[error("receiver {receiver} has no off-slots; observation is degenerate")]
    DegenerateInstance { receiver: usize },

    #[error("quadrature did not converge on [{lower}, {upper}]: error estimate {estimate:e}")]
    Quadrature { lower: f64, upper: f64, estimate: f64 },

    #[error("numerical consistency check failed: {0}")]
    NumericalConsistency(String),

    #[error("prior grid too coarse: tabulated mass {mass} deviates from 1 by more than {tolerance:e}")]
    Refinement { mass: f64, tolerance: f64 },

    #[error("non-finite input {0}")]
    NonFinite(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
