use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failures of the command-line layer.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("cannot read config {path}: {source}")]
    ConfigIo { path: PathBuf, source: io::Error },
    #[error("invalid config {path}: {detail}")]
    Config { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
    #[error("checkpoint {path} has format version {found}; this build reads version {expected}")]
    Version {
        path: PathBuf,
        found: String,
        expected: u64,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] modalmeta_core::Error),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl AppError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Io { path, source }
    }

    /// 2 for configuration and usage problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::ConfigIo { .. } | AppError::Config { .. } | AppError::Usage(_) => 2,
            AppError::Core(
                modalmeta_core::Error::Config(_) | modalmeta_core::Error::ModulationMismatch { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
