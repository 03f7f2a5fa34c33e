use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Core(kvmem_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    /// 1 usage or configuration, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        use kvmem_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Io { .. } | CliError::Format { .. } | CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Core(e) => match e {
                E::Config(_) => 1,
                E::Numeric(_) => 3,
                _ => 2,
            },
        }
    }
}

impl From<kvmem_core::Error> for CliError {
    fn from(e: kvmem_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}
