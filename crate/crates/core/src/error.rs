//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {op} did not converge on a {rows}x{cols} matrix")]
    Numerical {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("training diverged in {stage} at epoch {epoch}: {detail}")]
    Divergence {
        stage: String,
        epoch: usize,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Stable machine-readable category, used for process exit codes and the
    /// HTTP error body.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Contract(_) => ErrorKind::Config,
            Error::Numerical { .. } | Error::Divergence { .. } => ErrorKind::Numerical,
            Error::Io { .. } | Error::Parse { .. } => ErrorKind::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

impl ErrorKind {
    /// CLI exit code convention: 0 success, 1 config, 2 numerical, 3 i/o.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Numerical => 2,
            ErrorKind::Io => 3,
        }
    }
}
