use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{operation} failed: {source}")]
    Numerical {
        operation: &'static str,
        source: jchsim::Error,
    },
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Output(_) => 1,
        }
    }

    /// Wraps a library error raised while validating inputs.
    pub fn invalid(operation: &'static str, e: jchsim::Error) -> Self {
        CliError::Config(format!("{operation}: {e}"))
    }

    pub fn numerical(operation: &'static str) -> impl FnOnce(jchsim::Error) -> Self {
        move |source| CliError::Numerical { operation, source }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
