//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RewtsError>;

#[derive(Debug, Error)]
pub enum RewtsError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("convergence error: {message} (iterations: {iterations}, residual: {residual:.3e})")]
    Convergence {
        message: String,
        iterations: usize,
        residual: f64,
    },
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("comparison error: {0}")]
    Comparison(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RewtsError {
    /// Stable machine-readable category name, used by the CLI error output.
    pub fn category(&self) -> &'static str {
        match self {
            RewtsError::Schema(_) => "schema",
            RewtsError::Ordering(_) => "ordering",
            RewtsError::EmptyInput(_) => "empty_input",
            RewtsError::Parameter(_) => "parameter",
            RewtsError::Index(_) => "index",
            RewtsError::Shape(_) => "shape",
            RewtsError::InsufficientData(_) => "insufficient_data",
            RewtsError::Numeric(_) => "numeric",
            RewtsError::Parse(_) => "parse",
            RewtsError::Convergence { .. } => "convergence",
            RewtsError::Coverage(_) => "coverage",
            RewtsError::Comparison(_) => "comparison",
            RewtsError::Config(_) => "config",
            RewtsError::Io(_) => "io",
            RewtsError::Csv(_) => "csv",
            RewtsError::Json(_) => "json",
        }
    }
}
