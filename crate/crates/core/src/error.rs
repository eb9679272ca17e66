use thiserror::Error;

/// Errors produced by the evaluation, optimization and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A utility or configuration string could not be parsed.
    #[error("parse error at `{token}`: {reason}")]
    Parse { token: String, reason: String },

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound:e} > tolerance {tolerance:e}")]
    Quadrature {
        estimate: f64,
        error_bound: f64,
        tolerance: f64,
    },

    /// A numeric routine failed for a reason other than quadrature convergence.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The request exceeds what an exact method can handle.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A runtime self-check failed (montecarlo debug checks).
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
