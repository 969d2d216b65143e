//! Experiment runner: TOML configs, the end-to-end pipeline, sweeps over
//! augmentation settings and the `auglab` command line.

pub mod config;
pub mod experiment;
pub mod sweep;

/// Exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for a failed pipeline stage.
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: auglab_core::Error,
    },
}

impl CliError {
    pub fn config(e: auglab_core::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn stage(stage: &'static str, source: auglab_core::Error) -> Self {
        CliError::Stage { stage, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Stage { .. } => EXIT_STAGE,
        }
    }
}
