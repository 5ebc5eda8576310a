//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter is out of range (dimensions, rates, scales).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Malformed input data (non-finite entries, asymmetric matrix, shape
    /// mismatch, infeasible starting point).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The iterative eigensolver ran out of its iteration budget.
    #[error(
        "eigensolver did not converge within {max_iter} matrix-vector products \
         (best residual {best_residual:.3e}, requested tolerance {tolerance:.3e})"
    )]
    NoConvergence {
        max_iter: usize,
        best_residual: f64,
        tolerance: f64,
    },

    /// A least-squares system was numerically rank deficient.
    #[error("numerically rank deficient: {0}")]
    RankDeficient(String),

    /// An instance is degenerate for the requested metric (e.g. zero ground
    /// truth in a relative error).
    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),
}

pub type Result<T> = std::result::Result<T, Error>;
