// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Point outside the domain of a piecewise-linear function.
    #[error("{t} is outside the domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    /// Vector violates concavity beyond tolerance.
    #[error("not concave: slope increases by {excess:e} at knot {index}")]
    NotConcave { index: usize, excess: f64 },

    /// The active-set solver failed to converge or hit a singular system.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Confidence-interval scan accepted no grid point.
    #[error("no grid value was accepted; widen the grid (half-width {half_width})")]
    EmptyAcceptance { half_width: f64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
