use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integration diverged at step {step}: state {state:?}")]
    IntegrationDiverged { step: usize, state: Vec<f64> },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("dictionary kind `{0}` does not provide the required derivatives")]
    UnsupportedDictionary(String),

    #[error("backward called without a matching cached forward pass")]
    StaleCache,

    #[error("update produced non-finite parameters ({0})")]
    NonFiniteUpdate(String),

    #[error("network architectures differ: {0}")]
    ArchitectureMismatch(String),

    #[error("gram matrix is numerically singular (condition number {condition:.3e})")]
    SingularGram { condition: f64 },

    #[error("action {action} out of range (n_actions = {n_actions})")]
    ActionOutOfRange { action: usize, n_actions: usize },

    #[error("insufficient data: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("all arm means are equal; suboptimality gap undefined")]
    DegenerateArms,

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable code, used by the CLI on stderr.
    pub fn code(&self) -> &'static str {
        match self {
            Error::IntegrationDiverged { .. } => "IntegrationDiverged",
            Error::Config(_) => "ConfigError",
            Error::InvalidInput(_) => "InvalidInput",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::UnsupportedDictionary(_) => "UnsupportedDictionary",
            Error::StaleCache => "StaleCache",
            Error::NonFiniteUpdate(_) => "NonFiniteUpdate",
            Error::ArchitectureMismatch(_) => "ArchitectureMismatch",
            Error::SingularGram { .. } => "SingularGram",
            Error::ActionOutOfRange { .. } => "ActionOutOfRange",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::DegenerateArms => "DegenerateArms",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
        }
    }

    /// Config-class errors map to CLI exit code 1, everything else to 2.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
