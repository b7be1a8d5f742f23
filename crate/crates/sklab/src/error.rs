use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum SkError {
    #[error("invalid dimension {0}: need n >= 1")]
    InvalidDimension(usize),

    #[error("{what} = {value} is outside the admissible domain")]
    Domain { what: &'static str, value: f64 },

    #[error("evaluation point l = {l} is at or inside the support (edge {edge})")]
    Pole { l: f64, edge: f64 },

    #[error("wrong regime: {0}")]
    Regime(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("theory not applicable: {0}")]
    Inapplicable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SkError>;
