use thiserror::Error;

/// Errors raised by the solvers, samplers and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("site {site} needs a value outside the window [{lo}, {hi}]")]
    Truncation { site: String, lo: i64, hi: i64 },

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    UnstableStep { dt: f64, bound: f64 },

    #[error("state space has {states} states, limit is {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },

    #[error("quadrature did not converge: estimated error {achieved:e} > tolerance {tolerance:e}")]
    Quadrature { achieved: f64, tolerance: f64 },

    #[error("lumping precondition fails for {first} and {second}: {detail}")]
    LumpingPrecondition { first: String, second: String, detail: String },

    #[error("test function constraints are infeasible: {0}")]
    Infeasible(String),

    #[error("no snapshot recorded at t = {0}")]
    MissingSnapshot(f64),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config validation error in `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field, reason: reason.into() }
}
