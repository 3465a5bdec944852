use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space spec: {0}")]
    InvalidSpec(String),

    #[error("invalid object {object:?}: {reason}")]
    InvalidObject { object: Vec<usize>, reason: String },

    #[error("invalid message {message:?}: {reason}")]
    InvalidMessage { message: Vec<usize>, reason: String },

    #[error("need {needed} objects but only {available} are available")]
    InsufficientObjects { needed: usize, available: usize },

    #[error("cannot construct language: {0}")]
    CannotConstruct(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gradient check aborted: {0}")]
    GradientCheck(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("missing columns in {path}: {columns:?}")]
    MissingColumns { path: String, columns: Vec<String> },

    #[error("run {run_id} failed: {source}")]
    RunFailed {
        run_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("invalid configuration file: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Errors caused by the caller's configuration rather than by a failing run.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::RunFailed { source, .. } => source.is_config_error(),
            other => matches!(
                other,
                Error::InvalidSpec(_) | Error::Config(_) | Error::Toml(_) | Error::MissingColumns { .. }
            ),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
