use std::path::PathBuf;

use reachzono::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("numerical failure in stage {stage} at step {}: {message}", step_label(*.step))]
    Numerical {
        stage: &'static str,
        step: Option<usize>,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed artifact {}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
}

fn step_label(step: Option<usize>) -> String {
    step.map_or_else(|| "n/a".to_string(), |s| s.to_string())
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingArtifact(_) => 2,
            CliError::Config { .. } => 3,
            CliError::Numerical { .. } => 4,
            CliError::Io { .. } | CliError::Malformed { .. } => 1,
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Wraps a kernel error raised while running `stage`.
    pub fn numerical(stage: &'static str) -> impl Fn(CoreError) -> CliError {
        move |e| {
            let step = match &e {
                CoreError::NonFinite { step } => Some(*step),
                _ => None,
            };
            CliError::Numerical {
                stage,
                step,
                message: e.to_string(),
            }
        }
    }

    pub fn at_step(stage: &'static str, step: usize) -> impl Fn(CoreError) -> CliError {
        move |e| {
            let step = match &e {
                CoreError::NonFinite { step } => *step,
                _ => step,
            };
            CliError::Numerical {
                stage,
                step: Some(step),
                message: e.to_string(),
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
