use std::path::Path;

use thiserror::Error;

/// Errors surfaced by the command-line tools. Each class maps to an exit
/// code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for config errors, 3 for data errors, 4 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) | CliError::Io { .. } => 4,
        }
    }
}

impl From<pipmine_core::Error> for CliError {
    fn from(e: pipmine_core::Error) -> Self {
        use pipmine_core::Error as E;
        match e {
            E::InvalidConfig(_) => CliError::Config(e.to_string()),
            E::DimensionMismatch { .. }
            | E::IndexOutOfRange { .. }
            | E::DuplicateIndex(_)
            | E::DuplicateCombination(_)
            | E::EmptyDataset
            | E::EmptyPatterns
            | E::EmptyEnsemble
            | E::CombinationNotFound
            | E::UndefinedRelativeRisk { .. } => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
