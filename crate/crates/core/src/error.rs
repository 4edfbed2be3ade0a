use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("band exceeds Nyquist: {0}")]
    Nyquist(String),
    #[error("signal too short: need at least {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("unsupported window kind: {0}")]
    UnsupportedWindow(String),
    #[error("mismatched frame grids: {0}")]
    FrameMismatch(String),
    #[error("masked cell: {0}")]
    Masked(String),
    #[error("symmetry: {0}")]
    Symmetry(String),
    #[error("empty event set: no events fall inside the signal")]
    EmptyEventSet,
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
