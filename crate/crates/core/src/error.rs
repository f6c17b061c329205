use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate interval [{a}, {b}]")]
    DegenerateInterval { a: f64, b: f64 },
    #[error("iterate escaped the domain at t = {t}: x = {x:?}")]
    DomainEscape { t: f64, x: Vec<f64> },
    #[error(
        "no convergence after {iterations} iterations (last delta {last_delta:e}, contraction ratio {ratio:.4})"
    )]
    NonConvergence {
        iterations: usize,
        last_delta: f64,
        ratio: f64,
    },
    #[error("error bound unavailable: spectral radius {0} >= 1")]
    BoundUnavailable(f64),
    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e}")]
    Quadrature { estimate: f64, error: f64 },
    #[error("grid search produced no converged point")]
    NoCandidate,
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn parameter<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
