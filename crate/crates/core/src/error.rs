use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: String, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("invalid model specification: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("Monte Carlo budget {budget} too small (need at least {required})")]
    Budget { budget: usize, required: usize },

    #[error("insufficient tail: {found} exceedances, need at least {needed}")]
    InsufficientTail { needed: usize, found: usize },

    #[error("empty panel")]
    EmptyPanel,

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("row {0} has zero centered variance")]
    DegenerateRow(usize),

    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter { .. } => "parameter",
            Error::Numeric(_) => "numeric",
            Error::UnsupportedModel(_) => "unsupported_model",
            Error::Validation(_) => "validation",
            Error::Budget { .. } => "budget",
            Error::InsufficientTail { .. } => "insufficient_tail",
            Error::EmptyPanel => "empty_panel",
            Error::ContractViolation(_) => "contract_violation",
            Error::DegenerateRow(_) => "degenerate_row",
            Error::Ingest { .. } => "ingest",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
