use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),

    #[error("eigendecomposition residual {0:.3e} exceeds tolerance")]
    EigenResidual(f64),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("cannot split odd-length bit string (length {0})")]
    OddLength(usize),

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("n must be even and at least 2, got {0}")]
    InvalidN(usize),

    #[error("n = {n} exceeds the limit {limit} for {what}")]
    TooLarge {
        n: usize,
        limit: usize,
        what: &'static str,
    },

    #[error("missing observables for question {0}")]
    MissingQuestion(String),

    #[error("observables for question {question} do not commute (residual {residual:.3e})")]
    NonCommuting { question: String, residual: f64 },

    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),

    #[error("k and l must differ (both {0})")]
    SameIndex(usize),

    #[error("junk extraction failed: partial overlap norm {0:.3e} is below 1e-12")]
    JunkExtraction(f64),

    #[error("strategy failed validation: {0}")]
    InvalidStrategy(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
