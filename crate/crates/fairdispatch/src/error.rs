use std::path::PathBuf;
use std::process::ExitCode;

use fairdispatch_core::{EnvError, MlpError, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config files or input files.
    #[error("configuration error: {0}")]
    Config(String),
    /// A run broke an invariant of the simulator or the learner.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) | CliError::Io { .. } => ExitCode::from(2),
            CliError::Contract(_) => ExitCode::from(3),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        CliError::Contract(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::EmptyPool => CliError::Config(e.to_string()),
            _ => CliError::Contract(e.to_string()),
        }
    }
}

impl From<MlpError> for CliError {
    fn from(e: MlpError) -> Self {
        CliError::Config(format!("weights: {e}"))
    }
}
