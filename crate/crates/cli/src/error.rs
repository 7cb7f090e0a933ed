use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("stage {stage} failed: {source}")]
    StageFailure {
        stage: &'static str,
        #[source]
        source: anyhow::Error,
    },
    #[error("stage {stage}: quadrature budget exceeded: {source}")]
    QuadratureBudgetExceeded {
        stage: &'static str,
        #[source]
        source: dunklab::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::ConfigInvalid(_) => ExitCode::from(2),
            CliError::StageFailure { .. } => ExitCode::from(3),
            CliError::QuadratureBudgetExceeded { .. } => ExitCode::from(4),
        }
    }

    /// Classifies a failure inside `stage`.
    pub fn stage(stage: &'static str, err: anyhow::Error) -> Self {
        match err.downcast::<dunklab::Error>() {
            Ok(e @ dunklab::Error::ToleranceNotReached { .. }) => CliError::QuadratureBudgetExceeded { stage, source: e },
            Ok(e) => CliError::StageFailure { stage, source: e.into() },
            Err(e) => CliError::StageFailure { stage, source: e },
        }
    }
}

impl From<dunklab::Error> for CliError {
    fn from(e: dunklab::Error) -> Self {
        CliError::ConfigInvalid(e.to_string())
    }
}
