use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Row and column are 1-based, as a spreadsheet would show them.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("linear solver stopped at residual {residual:e} (target {target:e}) after {iterations} iterations")]
    SolverFailed {
        residual: f64,
        target: f64,
        iterations: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("recall undefined: label {label} has no members besides the query")]
    UndefinedRecall { label: i64 },

    #[error("method failed on query {query}: {source}")]
    Query {
        query: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True when the failure stems from bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::Parse { .. }
            | Error::Empty(_)
            | Error::UndefinedRecall { .. }
            | Error::Json(_) => true,
            Error::Io(e) => e.kind() == std::io::ErrorKind::NotFound,
            Error::Query { source, .. } => source.is_validation(),
            Error::SolverFailed { .. } | Error::NonFinite(_) => false,
        }
    }
}
