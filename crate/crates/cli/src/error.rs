use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("config {name:?}: {message}")]
    Invalid { name: String, message: String },
    #[error("duplicate experiment name {0:?} in suite")]
    DuplicateName(String),
    #[error("no such config directory {0}")]
    MissingDir(PathBuf),
    #[error(transparent)]
    Core(#[from] unigroup_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
