use thiserror::Error;

/// Errors raised by the estimation pipeline.
///
/// The three variants map onto the CLI exit-code classes: malformed input,
/// invalid configuration, and numerical breakdown.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CotError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, CotError>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CotError::Input(msg.into()))
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CotError::Config(msg.into()))
}
