use thiserror::Error;

/// Failures of the runner, mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent configuration (exit 1).
    #[error("usage error: {0}")]
    Usage(String),
    /// Precondition or cap violation reported by the library (exit 1).
    #[error(transparent)]
    Core(#[from] nelson_fk::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}
