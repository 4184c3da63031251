use std::path::Path;

use thiserror::Error;

pub type AppResult<T> = Result<T, AppError>;

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const INTERNAL: i32 = 1;
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Input(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated input: {0}")]
    Truncated(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] scorefp_core::Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<AppError>,
    },
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn with_path(self, path: &Path) -> Self {
        AppError::Context {
            context: path.display().to_string(),
            source: Box::new(self),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(scorefp_core::Error::NotConverged { .. }) => exit::NOT_CONVERGED,
            AppError::Core(scorefp_core::Error::NumericalError { .. })
            | AppError::Core(scorefp_core::Error::DivergedTrajectory { .. })
            | AppError::Core(scorefp_core::Error::SingularSystem { .. }) => exit::INTERNAL,
            AppError::Context { source, .. } => source.exit_code(),
            _ => exit::INPUT,
        }
    }
}
