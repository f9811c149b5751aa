use thiserror::Error;

/// Errors raised by the library. The CLI maps these onto exit codes, the C
/// ABI onto status codes.
#[derive(Debug, Error)]
pub enum CmcError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("surface fold: {0}")]
    Fold(String),

    #[error("graph fold: {0}")]
    GraphFold(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("nonzero mass required")]
    DegenerateMass,

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("unsupported dimension n = {0}; runtime transforms exist for n = 2 only")]
    UnsupportedDimension(usize),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = CmcError> = std::result::Result<T, E>;
