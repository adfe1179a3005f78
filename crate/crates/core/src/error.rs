use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {coordinate} = {value} lies outside [0, 1]")]
    Domain { coordinate: usize, value: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("grid alignment error: {0}")]
    Alignment(String),

    #[error("degenerate Gram matrix: smallest eigenvalue {min_eigenvalue:e}")]
    Degenerate { min_eigenvalue: f64 },

    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("model assumption violated: {0}")]
    Assumption(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
