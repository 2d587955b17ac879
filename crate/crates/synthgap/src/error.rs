use std::io;
use std::path::{Path, PathBuf};

use synthgap_core::Error as CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    /// A file exists but its contents are malformed or truncated.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("not found: {0}")]
    NotFound(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Some sweep points failed; the others completed.
    #[error("{failed} of {total} sweep points failed")]
    Partial { failed: usize, total: usize },
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Error::Format { path: path.as_ref().to_path_buf(), message: message.into() }
    }

    /// Process exit status for the command line: 2 for invalid input, 3 for
    /// file-system and format problems, 4 for partially failed sweeps.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(_) | Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } | Error::NotFound(_) => 3,
            Error::Partial { .. } => 4,
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Core(CoreError::Validation(_)) | Error::Config(_))
    }
}

/// Attach a path to `io::Error`s.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
