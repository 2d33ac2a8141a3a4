use thiserror::Error;

/// Error type shared across the simulation and analysis pipeline.
///
/// The variants map one-to-one onto the CLI exit-code classes, so keep
/// them coarse: a new failure mode should reuse an existing class unless
/// callers genuinely need to distinguish it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset schema violation: {0}")]
    Schema(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
