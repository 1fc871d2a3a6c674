use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at row {row}, column {col}: {msg}")]
    Format { row: usize, col: usize, msg: String },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("division by zero: {0}")]
    DivideByZero(String),

    #[error("empty vocabulary: every word was filtered out")]
    EmptyVocabulary,

    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),

    #[error("resolution error: epsilon {eps} must be smaller than the scale {mu}")]
    Resolution { eps: f64, mu: f64 },

    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParameter { name: &'static str, msg: String },

    #[error("input vector is not unit norm (norm = {0})")]
    NotNormalized(f64),

    #[error("undefined state: {0}")]
    UndefinedState(String),

    #[error("unreachable target: estimated mass {reached} is below the requested {target}")]
    UnreachableTarget { target: f64, reached: f64 },

    #[error("empty retention: no estimated singular value is at least theta = {theta}")]
    EmptyRetention { theta: f64 },

    #[error("bound precondition violated: {0}")]
    BoundPrecondition(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("stratification error: class {label} has {count} samples but {folds} folds were requested")]
    Stratification {
        label: usize,
        count: usize,
        folds: usize,
    },

    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    #[error("incomplete runtime parameters: missing `{0}`")]
    IncompleteParams(&'static str),

    #[error("unknown command `{0}`")]
    UnknownCommand(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            msg: msg.into(),
        }
    }

    /// Stable machine-readable kind, used in CLI error records and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Structure(_) => "structure",
            Error::Empty(_) => "empty",
            Error::Numeric(_) => "numeric",
            Error::DivideByZero(_) => "divide_by_zero",
            Error::EmptyVocabulary => "empty_vocabulary",
            Error::DegenerateTable(_) => "degenerate_table",
            Error::Resolution { .. } => "resolution",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::NotNormalized(_) => "not_normalized",
            Error::UndefinedState(_) => "undefined_state",
            Error::UnreachableTarget { .. } => "unreachable_target",
            Error::EmptyRetention { .. } => "empty_retention",
            Error::BoundPrecondition(_) => "bound_precondition",
            Error::Shape { .. } => "shape",
            Error::Stratification { .. } => "stratification",
            Error::InfeasibleBudget(_) => "infeasible_budget",
            Error::IncompleteParams(_) => "incomplete_params",
            Error::UnknownCommand(_) => "unknown_command",
            Error::Serde(_) => "serde",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
