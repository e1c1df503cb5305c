//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("feature index {index} out of range for p = {p}")]
    Index { index: usize, p: usize },

    #[error("degenerate column '{0}': zero variance, cannot scale")]
    DegenerateColumn(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("coefficient vector is not a contrast: sum = {sum:.6e} exceeds tolerance {tol:.6e}")]
    NotAContrast { sum: f64, tol: f64 },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("selection event self-consistency violated: max slack {0:.3e}")]
    InconsistentEvent(f64),

    #[error("truncation interval infeasible: V- = {vminus:.6e} > V+ = {vplus:.6e}")]
    InfeasibleInterval { vminus: f64, vplus: f64 },

    #[error("no test available: {0}")]
    NoTest(String),

    #[error("unstable truncation: denominator underflow in truncated CDF")]
    UnstableTruncation,

    #[error("degenerate fold: {0}")]
    DegenerateFold(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
