use thiserror::Error;

/// Errors surfaced by constructors and solvers.
///
/// Everything here is a caller-visible failure: either the request was
/// malformed (bad domain, mismatched grids) or a numerical procedure could
/// not certify its result (singular Gramian, Riccati blow-up, divergence).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("basis mismatch between operands")]
    BasisMismatch,

    #[error("matrix is singular or indefinite: {0}")]
    Singular(String),

    #[error("{what} did not converge (residual {residual:.3e}, tolerance {tol:.3e})")]
    NotConverged {
        what: String,
        residual: f64,
        tol: f64,
    },

    #[error("trajectory exceeded the energy ceiling at t = {t:.6} (E = {energy:.3e})")]
    Instability { t: f64, energy: f64 },

    #[error("Riccati sweep exceeded the norm ceiling at t = {t:.6} (|Q| = {norm:.3e})")]
    RiccatiBlowUp { t: f64, norm: f64 },

    #[error("{0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
