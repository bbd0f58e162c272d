use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid score {0}: scores must be finite")]
    InvalidScore(f64),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("solver did not converge after {iterations} iterations (gap {gap:e})")]
    Convergence { iterations: usize, gap: f64 },

    #[error("model expects {expected}-D input, decision grids need 2-D")]
    Dimensionality { expected: usize },

    #[error("incomplete fusion: {0}")]
    IncompleteFusion(String),

    #[error("degenerate test input: {0}")]
    Degenerate(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("user {user}: {source}")]
    ForUser {
        user: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Name of the module that raised the error, used for diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Error::InvalidScore(_) | Error::NonFinite { .. } => "core-model",
            Error::Spec(_) | Error::DegenerateWindow(_) => "datastream",
            Error::Shape { .. }
            | Error::Convergence { .. }
            | Error::Dimensionality { .. }
            | Error::Parameter(_)
            | Error::InsufficientData(_) => "classifiers",
            Error::IncompleteFusion(_) => "fusion",
            Error::Degenerate(_) | Error::Alignment(_) => "stats",
            Error::ForUser { source, .. } => source.module(),
        }
    }

    /// User the error was raised for, if any.
    pub fn user(&self) -> Option<&str> {
        match self {
            Error::ForUser { user, .. } => Some(user),
            _ => None,
        }
    }

    pub(crate) fn for_user(self, user: &str) -> Error {
        match self {
            e @ Error::ForUser { .. } => e,
            e => Error::ForUser {
                user: user.into(),
                source: Box::new(e),
            },
        }
    }
}
