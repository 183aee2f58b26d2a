use thiserror::Error;

/// Errors raised by the solvers and reconstruction drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{what} did not converge (residual {residual:e})")]
    NoConvergence { what: &'static str, residual: f64 },

    #[error("operator is not positive definite: eigenvalue {index} is {value:e}")]
    Definiteness { index: usize, value: f64 },

    #[error("nonlinear solve failed at time step {step} (residual {residual:e})")]
    Solver { step: usize, residual: f64 },

    #[error("solution blew up at time step {step}")]
    BlowUp { step: usize },

    #[error("projection onto the reaction basis failed (condition estimate {condition:e})")]
    Projection { condition: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("regularized Newton system is singular (condition estimate {condition:e})")]
    Step { condition: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
