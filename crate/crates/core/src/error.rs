use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("stacked data of agents {subset:?} has rank {rank} < dimension {dim}")]
    RankDeficient {
        subset: Vec<usize>,
        rank: usize,
        dim: usize,
    },

    #[error("budget invalid: {0}")]
    BudgetInvalid(String),

    #[error("resilience margin alpha = {alpha} is not positive")]
    NonPositiveMargin { alpha: f64 },

    #[error("step size {eta} is not below the ceiling {eta_bar}")]
    StepTooLarge { eta: f64, eta_bar: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("expected {expected} gradients, got {got}")]
    WrongCount { expected: usize, got: usize },

    #[error("subset is empty")]
    EmptySubset,

    #[error("agent index {index} out of range for {n} agents")]
    AgentOutOfRange { index: usize, n: usize },

    #[error("only {have} agents inside the staleness window, need {need}")]
    InsufficientReports { have: usize, need: usize },

    #[error("enumeration of {pairs} subset pairs exceeds the cap of {cap}")]
    EnumerationTooLarge { pairs: u128, cap: u128 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
