use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const FORMAT: i32 = 3;
    pub const NUMERICAL: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: imo_core::Error,
    },

    #[error(transparent)]
    Core(#[from] imo_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::File { source, .. } | CliError::Core(source) => core_code(source),
            CliError::Io { .. } => exit::IO,
            CliError::Json(_) => exit::IO,
        }
    }
}

fn core_code(e: &imo_core::Error) -> i32 {
    use imo_core::Error;
    match e {
        Error::Input(_) => exit::USAGE,
        Error::Format { .. } | Error::Config { .. } => exit::FORMAT,
        Error::DegenerateModel(_) | Error::Numerical(_) => exit::NUMERICAL,
        Error::Io(_) => exit::IO,
    }
}

/// Attaches `path` to a core error.
pub(crate) fn at(path: &std::path::Path) -> impl FnOnce(imo_core::Error) -> CliError + '_ {
    move |source| CliError::File {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}
