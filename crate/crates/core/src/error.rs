use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("period range {start}..={end} is outside the horizon 1..={horizon}")]
    PeriodOutOfRange { start: usize, end: usize, horizon: usize },

    #[error("autoregressive part is not covariance-stationary (companion spectral radius {spectral_radius:.6})")]
    NonStationary { spectral_radius: f64 },

    #[error("covariance factorization failed at leading minor {minor} after jitter")]
    Factorization { minor: usize },

    #[error("covariance matrix is not lag-1 (tridiagonal): entry ({row}, {col}) = {value}")]
    NotLag1 { row: usize, col: usize, value: f64 },

    #[error("cycle objective is unbounded below: the unit cost exceeds the penalty slope")]
    UnboundedCycle,

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
