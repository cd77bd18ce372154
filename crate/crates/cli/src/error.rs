use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] randtomo::Error),
    /// The computation finished but its result is flagged (e.g. an
    /// unconverged solver); outputs were still written.
    #[error("{0}")]
    Flagged(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Numerical(_) | CliError::Flagged(_) => ExitCode::from(3),
            CliError::Io(_) => ExitCode::from(1),
        }
    }
}
