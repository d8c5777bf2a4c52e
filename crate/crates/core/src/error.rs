use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Source and target files disagree on their number of lines.
    #[error("line count mismatch: source has {source_lines} lines, target has {target_lines}")]
    Alignment {
        source_lines: usize,
        target_lines: usize,
    },

    #[error("{path}: invalid UTF-8 at byte offset {offset}")]
    Encoding { path: PathBuf, offset: usize },

    /// A structured file could not be parsed. `line` is 1-based.
    #[error("{what}: parse error at line {line}: {message}")]
    Parse {
        what: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(what: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}
