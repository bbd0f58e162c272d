use std::io;
use std::path::PathBuf;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

/// Everything that can stop a command.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// A numerical error from the pipeline. The message leads with the
    /// module that raised it; the core error already names the user.
    #[error("[{module}] {source}", module = .source.module())]
    Core {
        #[from]
        source: occauth_core::Error,
    },

    #[error("[cli] {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("[datastream] {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("[datastream] {path}: missing column {column}")]
    Schema { path: PathBuf, column: String },

    #[error("[datastream] {path}: row {row}, column {column}: cannot parse {value:?}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("[cli] {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("[cli] {path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("[cli] {0}")]
    Config(String),
}

impl AppError {
    pub fn module(&self) -> &'static str {
        match self {
            AppError::Core { source } => source.module(),
            AppError::Csv { .. } | AppError::Schema { .. } | AppError::Parse { .. } => "datastream",
            _ => "cli",
        }
    }

    pub fn user(&self) -> Option<&str> {
        match self {
            AppError::Core { source } => source.user(),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Csv { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Json { path, source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_name_module_and_user() {
        let e = occauth_core::Error::Parameter("k_neighbors (9) too large".into());
        let e = AppError::from(occauth_core::Error::ForUser {
            user: "u03".into(),
            source: Box::new(e),
        });
        let msg = e.to_string();
        assert!(msg.starts_with("[classifiers]"), "{msg}");
        assert!(msg.contains("u03"), "{msg}");
        assert_eq!(e.user(), Some("u03"));
    }
}
