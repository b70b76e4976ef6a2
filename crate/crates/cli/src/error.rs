use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const ACCEPTANCE: i32 = 4;
    pub const MISSING_FILE: i32 = 5;
    pub const INVALID: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("config error in {}: {message}", .path.display())]
    Schema { path: PathBuf, message: String },

    #[error("unknown preset `{0}` (see `list-presets`)")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Invalid(#[source] photon_filter_core::Error),

    #[error("numerical failure: {0}")]
    Numerical(#[source] photon_filter_core::Error),

    #[error("acceptance failed for criteria {0:?}")]
    Acceptance(Vec<u8>),

    #[error("cannot write {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile(_) => exit::MISSING_FILE,
            CliError::Schema { .. } | CliError::UnknownPreset(_) => exit::CONFIG,
            CliError::Invalid(_) => exit::INVALID,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Acceptance(_) => exit::ACCEPTANCE,
            CliError::Io { .. } => exit::IO,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<photon_filter_core::Error> for CliError {
    fn from(e: photon_filter_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e)
        } else {
            CliError::Invalid(e)
        }
    }
}
