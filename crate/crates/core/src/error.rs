use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config {path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("corrupt database ({check}): {detail}")]
    CorruptDatabase { check: &'static str, detail: String },

    #[error("corrupt checkpoint ({check}): {detail}")]
    CorruptCheckpoint { check: &'static str, detail: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure class, used for exit codes and machine-readable CLI errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Input,
    Data,
    Shape,
    Divergence,
    Io,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Input => "input",
            Category::Data => "data",
            Category::Shape => "shape",
            Category::Divergence => "divergence",
            Category::Io => "io",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Input => 2,
            Category::Data | Category::Shape => 3,
            Category::Divergence => 4,
            Category::Io => 5,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::InvalidInput(_) | Error::Config { .. } => Category::Input,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Category::Input
            }
            Error::Io { .. } => Category::Io,
            Error::Shape(_) => Category::Shape,
            Error::Degenerate(_)
            | Error::Parse { .. }
            | Error::CorruptDatabase { .. }
            | Error::CorruptCheckpoint { .. }
            | Error::UndefinedMetric(_) => Category::Data,
            Error::Diverged(_) => Category::Divergence,
        }
    }
}
