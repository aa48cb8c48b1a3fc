use thiserror::Error;

/// Errors raised by the model, the simulator and the experiment drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeraldError {
    /// An argument lies outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A conditional quantity was requested on an event of probability zero.
    #[error("degenerate condition: {0}")]
    DegenerateCondition(String),
}

pub type Result<T> = std::result::Result<T, HeraldError>;

pub(crate) fn invalid(msg: impl Into<String>) -> HeraldError {
    HeraldError::InvalidParameter(msg.into())
}

pub(crate) fn degenerate(msg: impl Into<String>) -> HeraldError {
    HeraldError::DegenerateCondition(msg.into())
}
