use std::fmt;

use seqtrans::dag::DagError;
use seqtrans::dataset::DatasetError;
use seqtrans::fairness::FairnessError;
use seqtrans::gaussian::GaussianError;
use seqtrans::gridtransport::GridError;
use seqtrans::seqtransport::TransportError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Failure of a command, classified by exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad input: arguments, files, graph, data layout.
    Validation(String),
    /// Estimation or linear algebra broke down on valid input.
    Numeric(String),
}

impl CliError {
    pub fn validation(msg: impl fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Numeric(_) => "numeric",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numeric(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Validation(format!("csv: {e}"))
    }
}

impl From<DagError> for CliError {
    fn from(e: DagError) -> Self {
        CliError::Validation(format!("graph: {e}"))
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Validation(format!("data: {e}"))
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Density { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Transport(t) => t.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<GaussianError> for CliError {
    fn from(e: GaussianError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<FairnessError> for CliError {
    fn from(e: FairnessError) -> Self {
        match e {
            FairnessError::NonFinite => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
