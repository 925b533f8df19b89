use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Load { path: PathBuf, line: u64, message: String },

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("{0}")]
    Spec(String),

    #[error(transparent)]
    Model(#[from] bbgp::Error),

    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    /// 1 for estimation failures, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NotConverged(_)
            | CliError::Model(
                bbgp::Error::NotConverged(_) | bbgp::Error::Convergence(_) | bbgp::Error::Initialization(_),
            ) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
