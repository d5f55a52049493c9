use std::path::PathBuf;

/// Command failures, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact {}: {hint}", path.display())]
    MissingArtifact { path: PathBuf, hint: String },
    #[error(transparent)]
    Core(#[from] skelforge_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } => 3,
            _ => 1,
        }
    }

    pub fn missing(path: impl Into<PathBuf>, hint: &str) -> Self {
        CliError::MissingArtifact {
            path: path.into(),
            hint: hint.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
