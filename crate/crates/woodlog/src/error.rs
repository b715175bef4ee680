use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the WLOG container reader.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected \"WLOG\", got {0:?}")]
    BadMagic([u8; 4]),
    #[error("unknown format version {0}")]
    UnknownVersion(u16),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("truncated file: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("extraction error: {0}")]
    Extraction(String),
    #[error("state error: {0}")]
    State(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("format error: {0}")]
    Format(#[from] FormatError),
    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
