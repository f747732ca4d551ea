use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("time {t} outside [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },

    #[error("usage: {0}")]
    Usage(String),

    #[error(
        "mode {n}: no sign change on ({lower}, {upper}); residuals {r_lower:e} / {r_upper:e}"
    )]
    RootNotBracketed {
        n: usize,
        lower: f64,
        upper: f64,
        r_lower: f64,
        r_upper: f64,
    },

    #[error("mode {n}: root finder did not converge in ({lower}, {upper}), residual {residual:e}")]
    RootFinder {
        n: usize,
        lower: f64,
        upper: f64,
        residual: f64,
    },

    #[error("quadrature on [{a}, {b}] did not reach tolerance {tol:e} within depth {max_depth}")]
    Quadrature {
        a: f64,
        b: f64,
        tol: f64,
        max_depth: u32,
    },

    #[error(
        "Euler step {step} at t = {t} is unstable: drift rate * dt = {ratio} >= 1 (refine the grid near T)"
    )]
    Stability { step: usize, t: f64, ratio: f64 },

    #[error("covariance matrix is indefinite: pivot {pivot:e} at index {index} (scale {scale:e})")]
    Indefinite { index: usize, pivot: f64, scale: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    Eigensolver { iterations: usize, residual: f64 },

    #[error("noise sequence exhausted after {0} draws")]
    NoiseExhausted(usize),
}

impl Error {
    /// True for numerical failures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RootNotBracketed { .. }
                | Error::RootFinder { .. }
                | Error::Quadrature { .. }
                | Error::Indefinite { .. }
                | Error::Eigensolver { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
