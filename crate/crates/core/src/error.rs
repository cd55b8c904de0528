use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] NumericalFailure),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Diagnostics carried out of a quadrature that could not reach its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericalFailure {
    pub reason: &'static str,
    /// Point at which the CDF was requested.
    pub x: f64,
    /// Upper integration limit reached before giving up.
    pub upper_limit: f64,
    /// Change of the estimate between the last two refinements.
    pub last_delta: f64,
    pub evaluations: usize,
}

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (x = {}, upper limit = {:e}, last delta = {:e}, {} integrand evaluations)",
            self.reason, self.x, self.upper_limit, self.last_delta, self.evaluations
        )
    }
}

impl std::error::Error for NumericalFailure {}
