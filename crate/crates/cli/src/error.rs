use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(#[source] icurisk::Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: icurisk::Error,
    },

    #[error("I/O error on {path}: {source}")]
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
            CliError::Data(_) => 3,
            CliError::Stage { .. } | CliError::Io { .. } => 4,
        }
    }

    pub fn stage(stage: impl Into<String>) -> impl FnOnce(icurisk::Error) -> CliError {
        let stage = stage.into();
        move |source| CliError::Stage { stage, source }
    }

    pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Stage tag for the FAILED marker.
    pub fn stage_name(&self) -> &str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "load",
            CliError::Stage { stage, .. } => stage,
            CliError::Io { .. } => "write",
        }
    }
}
