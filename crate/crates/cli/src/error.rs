use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    /// A pipeline stage failed; `stage` names it.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: yann_core::Error,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage {
                source: yann_core::Error::Argument(_),
                ..
            } => 2,
            CliError::Stage { .. } => 3,
            CliError::Verification(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

/// Tags a core error with the stage it came from.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for yann_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
