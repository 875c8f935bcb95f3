//! CLI error classification onto process exit codes:
//! 1 usage, 2 config, 3 divergence, 4 backend transport.

use prompt_policy::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Divergence(String),
    Transport(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Transport(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Config(m)
            | CliError::Divergence(m)
            | CliError::Transport(m) => m,
        }
    }

    /// Core errors surfaced while interpreting configuration.
    pub fn from_core_config(e: CoreError) -> Self {
        CliError::Config(e.to_string())
    }

    /// Core errors surfaced while running a command.
    pub fn from_core_run(e: CoreError) -> Self {
        match e {
            CoreError::Divergence(m) => CliError::Divergence(m),
            CoreError::Transport { attempts, message } => {
                CliError::Transport(format!("after {attempts} attempt(s): {message}"))
            }
            other => CliError::Config(other.to_string()),
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        CliError::Config(format!("{context}: {e}"))
    }
}
