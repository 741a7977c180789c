use thiserror::Error;

/// Errors produced by model construction, quadrature, integration and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A field of a system definition failed validation.
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    /// A derivative was requested exactly on a discontinuity line.
    #[error("point x = {x} lies on breakpoint a_{index}; move it off the discontinuity line")]
    BoundaryPoint { x: f64, index: usize },

    #[error("numerical failure: {message} (best estimate {estimate:e}, achieved error {achieved:e})")]
    NumericalFailure {
        message: String,
        estimate: f64,
        achieved: f64,
    },

    #[error("precondition failed: {message} at (x, y) = ({x}, {y})")]
    Precondition { message: String, x: f64, y: f64 },

    #[error("no return to section within t = {max_time}")]
    NoReturn { max_time: f64 },

    #[error("no return to section: trajectory left radius bound {bound} at t = {t}")]
    Divergence { t: f64, bound: f64 },

    #[error("event localization did not converge near t = {t}")]
    EventLocalization { t: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn field(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::InvalidField { .. } | Error::BoundaryPoint { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
