use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] cautious::Error),

    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// 2 for usage and configuration problems, 3 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(cautious::Error::Config(_) | cautious::Error::Parse { .. }) => 2,
            CliError::Core(_) | CliError::Output(_) => 3,
        }
    }
}
