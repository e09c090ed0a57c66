use std::path::PathBuf;

use cok_core::embed::{CheckpointError, EmbedError};
use cok_core::kb::KbError;
use cok_core::llm::BackendError;
use cok_core::prompt::PromptError;
use cok_core::rethink::RethinkError;
use cok_core::verify::VerifyError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{}: {source}", path.display())]
    Checkpoint {
        path: PathBuf,
        source: CheckpointError,
    },
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Rethink(#[from] RethinkError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Process exit codes of the `cok` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const TRANSPORT: i32 = 3;
}

fn backend_exit(e: &BackendError) -> i32 {
    match e {
        BackendError::Config(_) => exit::USAGE,
        _ => exit::TRANSPORT,
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend(e) => backend_exit(e),
            Error::Rethink(RethinkError::Backend { source, .. }) => backend_exit(source),
            Error::Invalid(_)
            | Error::Rethink(RethinkError::Config(_))
            | Error::Verify(_)
            | Error::Embed(EmbedError::Config(_)) => {
                exit::USAGE
            }
            _ => exit::DATA,
        }
    }
}
