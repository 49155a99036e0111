use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("column index {column} out of range on line {line} ({width} fields)")]
    ColumnOutOfRange {
        column: usize,
        width: usize,
        line: usize,
    },
    #[error("zero valid records in {0}")]
    NoValidRecords(PathBuf),
    #[error("{kind} id {id} exceeds declared dimension {limit}")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        limit: usize,
    },
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate exposure: all-zero numerator")]
    DegenerateExposure,
    #[error("non-finite gradient in {table} row {row}")]
    NonFiniteGradient { table: &'static str, row: usize },
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("no evaluable users")]
    NoEvaluableUsers,
    #[error("infeasible degree constraints: {0}")]
    InfeasibleDegrees(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl Error {
    /// Stable short tag used by the CLI error line and the C error codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::ColumnOutOfRange { .. } => "column_out_of_range",
            Error::NoValidRecords(_) => "no_valid_records",
            Error::IdOutOfRange { .. } => "id_out_of_range",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateExposure => "degenerate_exposure",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::Diverged(_) => "diverged",
            Error::NoEvaluableUsers => "no_evaluable_users",
            Error::InfeasibleDegrees(_) => "infeasible_degrees",
            Error::Config(_) => "config",
            Error::Format { .. } => "format",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
