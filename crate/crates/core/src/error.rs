use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Replay {
        path: PathBuf,
        /// 1-based line number in the file.
        line: usize,
        message: String,
    },

    /// A configuration value failed validation. `at` is the dotted path of
    /// the offending field, e.g. `scene[musicking].edge[2].destination`.
    #[error("config: {at}: {message}")]
    Config { at: String, message: String },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("wav: {0}")]
    Wav(String),

    #[error("control: {0}")]
    Control(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(at: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            at: at.into(),
            message: message.into(),
        }
    }
}
