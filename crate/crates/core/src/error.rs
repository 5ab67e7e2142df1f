use thiserror::Error;

/// Errors raised by the selection library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:.3e}, largest {max_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64, max_eig: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("objective returned a non-finite value at sample point {index}")]
    NonFiniteObjective { index: usize },

    #[error("exhaustive search over {subsets} subsets exceeds the cap of {cap}")]
    OracleCapExceeded { subsets: u128, cap: u128 },

    #[error("finite uncertainty (k0={k0}, k1={k1}) is not supported by the mean-difference solvers; use the robust solvers")]
    UncertaintyNotSupported { k0: f64, k1: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("failed to parse instance: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
