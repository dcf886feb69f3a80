use thiserror::Error;

/// Errors raised by the numerical stack and the CLI front end.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature ran out of panels before meeting its tolerance.
    #[error(
        "quadrature did not converge: achieved error estimate {achieved:e} with {panels} panels"
    )]
    Quadrature { achieved: f64, panels: usize },

    /// No probability vector over the given locations satisfies the constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The multiplier system has fewer independent equations than unknowns.
    #[error("under-determined multiplier system: {0}")]
    UnderDetermined(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
