use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input data (shapes, non-finite values).
    #[error("input error: {0}")]
    Input(String),

    /// A parameter outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The noise level is outside the regime σ ≤ 1/4 assumed by the
    /// resolution/threshold policy.
    #[error("noise level σ = {sigma} is out of regime: the resolution policy requires σ ≤ 1/4")]
    OutOfRegime { sigma: f64 },

    /// An invalid synthetic scene description.
    #[error("scene error: {0}")]
    Spec(String),

    /// A quantity that is mathematically undefined for the given input.
    #[error("undefined: {0}")]
    Undefined(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
