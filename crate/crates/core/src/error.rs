use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("non-positive diagonal scale at index {0}")]
    DegenerateScale(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index {index} out of range for dimension {dim}")]
    InvalidIndex { index: usize, dim: usize },
    #[error("matrix with {rows} rows is rank deficient")]
    RankDeficient { rows: usize },
    #[error("dispersion matrix is ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),
    #[error("dimension {dim} exceeds the supported cap of {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },
    #[error("integration error {abs_error:.3e} exceeds limit {limit:.3e} after point budget")]
    NonConvergence { abs_error: f64, limit: f64 },
    #[error("unsupported generator: {0}")]
    UnsupportedGenerator(String),
    #[error("acceptance rate {rate:.3e} too low after {proposals} proposals")]
    LowAcceptance { rate: f64, proposals: u64 },
    #[error("grid truncates the support: boundary/max density ratio {ratio:.3e}")]
    SupportTruncated { ratio: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
