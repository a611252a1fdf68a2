use std::path::Path;

use thiserror::Error;

/// Pipeline failure carrying a stable process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Generic(String),

    #[error("empty or degenerate scene: {0}")]
    EmptyScene(String),

    #[error("goal {index} is unreachable: {reason}")]
    Unreachable { index: usize, reason: String },

    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Generic(_) => 1,
            CliError::EmptyScene(_) => 2,
            CliError::Unreachable { .. } => 3,
            CliError::Malformed(_) => 4,
        }
    }

    /// Classifies a library error raised while reading user input.
    pub fn input(what: &Path, e: splatwalk::Error) -> Self {
        use splatwalk::Error as E;
        match e {
            E::Format(_) | E::Data { .. } | E::Json(_) | E::Argument(_) => {
                CliError::Malformed(format!("{}: {e}", what.display()))
            }
            E::EmptyScene(_) | E::Degenerate(_) => CliError::EmptyScene(format!("{}: {e}", what.display())),
            E::Io { .. } => CliError::Generic(e.to_string()),
        }
    }

    /// Classifies a library error raised by a computation stage.
    pub fn stage(stage: &str, e: splatwalk::Error) -> Self {
        use splatwalk::Error as E;
        match e {
            E::EmptyScene(_) | E::Degenerate(_) => CliError::EmptyScene(format!("{stage}: {e}")),
            _ => CliError::Generic(format!("{stage}: {e}")),
        }
    }
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Generic(format!("{}: {e}", path.display()))
}
