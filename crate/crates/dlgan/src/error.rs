use std::path::{Path, PathBuf};

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] dlgan_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Json { context: String, source: serde_json::Error },
    #[error("image {context}: {message}")]
    Image { context: String, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Usage(String),
    #[error("training halted: {message}; state saved to {}", checkpoint.display())]
    Halted { message: String, checkpoint: PathBuf },
}

impl AppError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Self::Json { context: context.into(), source }
    }

    /// `1` for bad input, configuration or missing files, `2` for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        use dlgan_core::Error as E;
        match self {
            Self::Usage(_) | Self::Json { .. } => 1,
            Self::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
            Self::Core(
                E::Config(_)
                | E::Schema(_)
                | E::Encoding(_)
                | E::MalformedLabel { .. }
                | E::IncompleteLabel { .. }
                | E::SchemaMismatch(_)
                | E::Shape(_),
            ) => 1,
            _ => 2,
        }
    }
}
