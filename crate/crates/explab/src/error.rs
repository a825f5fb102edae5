use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExplabError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("all {count} sweep points failed; first error: {first}")]
    AllPointsFailed { count: usize, first: String },
}

impl ExplabError {
    /// Process exit status: 2 for configuration and input problems, 3 when
    /// the physics itself fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExplabError::Simulation(_) | ExplabError::AllPointsFailed { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExplabError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExplabError>;
