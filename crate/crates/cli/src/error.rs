use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{file}:{line}: {msg}")]
    Schema { file: String, line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Model(#[from] fcox::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for bad input or configuration, 3 for numerical failure, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } | CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Model(e) => match e {
                fcox::Error::Config(_)
                | fcox::Error::InvalidObservation { .. }
                | fcox::Error::InvalidCurve(_)
                | fcox::Error::GridMismatch
                | fcox::Error::Empty(_)
                | fcox::Error::DimensionMismatch(_)
                | fcox::Error::OutOfDomain { .. }
                | fcox::Error::IndexOutOfRange { .. } => 2,
                _ => 3,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
