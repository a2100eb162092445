use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value at row {row}, column {col} is outside its domain")]
    DomainViolation { row: usize, col: usize },

    #[error("shape error: {0}")]
    ShapeError(String),

    #[error("domain size must be at least 2, got {0}")]
    InvalidDomain(usize),

    #[error("privacy budget must be positive and finite, got {0}")]
    InvalidBudget(f64),

    #[error("tallies sum to {actual} but {expected} reports were declared")]
    CountMismatch { expected: usize, actual: usize },

    #[error("prior shape does not match the domain list: {0}")]
    PriorShapeError(String),

    #[error("all attributes must share one domain size")]
    HeterogeneousDomains,

    #[error("channel would have {size} rows, above the enumeration limit of {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("phase {0} has no reports but a nonzero weight")]
    EmptyPhase(&'static str),

    #[error("cannot split {n} users with phase-I fraction {fraction}: a phase would be empty")]
    SplitError { n: usize, fraction: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("recipe step `{step}` failed: {reason}")]
    RecipeError { step: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
