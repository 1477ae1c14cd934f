use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("operation not supported for {design} designs: {what}")]
    UnsupportedDesign { design: &'static str, what: &'static str },

    #[error("enumeration would visit {outcomes} outcomes, above the limit of {limit}")]
    EnumerationLimit { outcomes: f64, limit: f64 },

    #[error("joint inclusion probability is zero for units {k} and {l}")]
    ZeroJointInclusion { k: usize, l: usize },

    #[error("probability must be positive for unit {unit}, got {value}")]
    NonPositiveProbability { unit: usize, value: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("fit failed for fold {fold}: {source}")]
    FoldFit {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid hyperparameter `{name}` for {learner}: {reason}")]
    Hyperparameter { learner: &'static str, name: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::Csv { path: path.into(), message: message.to_string() }
    }
}
