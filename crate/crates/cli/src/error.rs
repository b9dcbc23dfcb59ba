use std::path::PathBuf;

use mfst_core::Error as CoreError;

use crate::ppm::PpmError;

pub type Result<T> = std::result::Result<T, CliError>;

/// Exit codes: 1 usage, 2 missing input, 3 corrupt data, 4 numeric failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    MissingInput { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Frame { path: PathBuf, source: PpmError },
    #[error("{context}: {source}")]
    Core { context: String, source: CoreError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::MissingInput { .. } => 2,
            CliError::Frame { .. } => 3,
            CliError::Io { source, .. } => match source.kind() {
                std::io::ErrorKind::NotFound => 2,
                _ => 3,
            },
            CliError::Core { source, .. } => core_exit_code(source),
        }
    }

    pub fn missing(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::MissingInput {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::InvalidArgument(_) => 1,
        CoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
        CoreError::NonFinite(_) | CoreError::Shape(_) => 4,
        _ => 3,
    }
}

/// Attaches context to core errors.
pub(crate) trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, CoreError> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: what(),
            source,
        })
    }
}
