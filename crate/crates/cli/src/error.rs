use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: malformed file: {message}", .path.display())]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Numeric(#[from] rbsmc::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format { path: path.to_path_buf(), message: message.into() }
    }

    /// Process exit status: 2 for configuration and input problems, 3 for
    /// numerical failures, 4 when the sampler hits its generation cap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } | Self::Format { .. } => 2,
            Self::Numeric(rbsmc::Error::GenerationCap { .. }) => 4,
            Self::Numeric(_) => 3,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
