use std::path::Path;

/// Exit status for invalid invocations, bad config, or unreadable inputs.
pub const EXIT_USAGE: u8 = 1;
/// Exit status for numerical failures and failed self-checks.
pub const EXIT_NUMERICAL: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] mmw_sketch::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{0}")]
    Output(String),

    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use mmw_sketch::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Output(_) => EXIT_USAGE,
            CliError::Core(
                E::Parse { .. }
                | E::InvalidArgument(_)
                | E::UnknownAdversary(_)
                | E::DenseLimitExceeded { .. }
                | E::Io(_),
            ) => EXIT_USAGE,
            CliError::Core(_) | CliError::CheckFailed(_) => EXIT_NUMERICAL,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
