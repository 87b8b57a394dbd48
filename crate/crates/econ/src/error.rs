use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = EconError> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Bad command-line usage (reported by the argument parser).
    pub const USAGE: u8 = 2;
    /// Invalid configuration; nothing was run.
    pub const CONFIG: u8 = 3;
    /// A file is missing, unreadable or malformed.
    pub const INPUT: u8 = 4;
    /// A stage failed while computing.
    pub const STAGE: u8 = 5;
}

#[derive(Debug, Error)]
pub enum EconError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] econ_core::Error),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<EconError>,
    },
}

impl EconError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        EconError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: u64, msg: impl ToString) -> Self {
        EconError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.to_string(),
        }
    }

    pub fn format(path: &Path, msg: impl ToString) -> Self {
        EconError::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ EconError::Stage { .. } => e,
            e => EconError::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            EconError::Config(_) => exit::CONFIG,
            EconError::Io { .. } | EconError::Parse { .. } | EconError::Format { .. } => exit::INPUT,
            EconError::Core(_) => exit::STAGE,
            EconError::Stage { source, .. } => source.exit_code(),
        }
    }
}
