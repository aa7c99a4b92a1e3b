use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("numeric failure: {0}")]
    Numeric(#[from] headlab_core::Error),
    #[error("malformed input: {0}")]
    Malformed(String),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    /// 2 for configuration and output problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }
}
