use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] swem_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 3 for numerical degeneracy, 2 for anything the
    /// caller supplied wrongly.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}
