use std::fmt;
use std::path::PathBuf;

/// A single broken invariant found while validating a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("invalid bids: {0}")]
    InvalidBids(String),

    #[error("scenario has no strategic company")]
    NoStrategicCompany,

    #[error("unknown company `{0}`")]
    UnknownCompany(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("oracle grid needs {0} evaluations (limit {limit})", limit = crate::bilevel::MAX_ORACLE_EVALUATIONS)]
    GridTooLarge(u128),

    #[error("market clearing is infeasible{}: {detail}", period.map(|t| format!(" in period {t}")).unwrap_or_default())]
    Infeasible {
        period: Option<usize>,
        detail: String,
    },

    #[error("QP solver failed: {0}")]
    Solver(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("figure rendering failed: {0}")]
    Render(String),

    #[error("case `{case}` failed: {source}")]
    CaseFailed {
        case: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code used by the CLI: 1 validation, 2 solve failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::InvalidBids(_)
            | Error::NoStrategicCompany
            | Error::UnknownCompany(_)
            | Error::Dimension(_)
            | Error::GridTooLarge(_)
            | Error::Parse(_) => 1,
            Error::Infeasible { .. } | Error::Solver(_) => 2,
            Error::Io { .. } | Error::Render(_) => 3,
            Error::CaseFailed { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
