use std::fmt;
use std::process::ExitCode;

/// A failed run: bad invocation, or a library error tagged with the stage it came from.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Stage {
        stage: &'static str,
        source: fnd_core::Error,
    },
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Stage { source, .. } => match source {
                fnd_core::Error::Config(_) | fnd_core::Error::Pipeline(_) => 2,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Stage { stage, source } => write!(f, "[{stage}] {source}"),
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for fnd_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
