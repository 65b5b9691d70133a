use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative numerical method failed to converge.
    #[error("numerical error: {0}")]
    Numeric(String),

    /// Adaptive quadrature hit its subdivision limit before meeting tolerance.
    #[error("quadrature did not converge: estimate {estimate:e} with error bound {abs_error:e}")]
    Quadrature { estimate: f64, abs_error: f64 },

    /// The threshold search found a non-monotone sweep in beta.
    #[error("phi is not monotone in beta on the bracket grid; fall back to a full grid scan")]
    MultiCrossing,

    /// No Monte Carlo trial produced the conditioning event.
    #[error("no trial produced the conditioning event out of {trials} trials; increase --trials or the bias")]
    InsufficientConditioningEvents { trials: u64 },

    /// An exact conditional expectation was requested on a probability-zero event.
    #[error("conditioning event has probability zero")]
    EmptyConditioningEvent,

    /// Malformed input file.
    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
