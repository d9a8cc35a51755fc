use std::path::PathBuf;

/// Everything a command can fail with, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gmdl_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    /// A checked inequality failed; outputs were still written.
    #[error("{count} hard check(s) failed: {detail}")]
    Violation { count: usize, detail: String },
}

impl CliError {
    /// 2 for inequality violations, 3 for precision refusals, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Violation { .. } | CliError::Core(gmdl_core::Error::Violation(_)) => 2,
            CliError::Core(gmdl_core::Error::PrecisionInsufficient { .. }) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
