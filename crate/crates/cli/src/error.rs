use std::io;

/// Errors surfaced by the file formats and the runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] deeptwist_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    /// 1 for bad arguments, 2 for bad files or numerical failures.
    pub fn exit_code(&self) -> u8 {
        use deeptwist_core::Error as Core;
        match self {
            Error::Argument(_) => 1,
            Error::Core(Core::Argument(_) | Core::Infeasible { .. } | Core::Unsupported(_)) => 1,
            _ => 2,
        }
    }
}
