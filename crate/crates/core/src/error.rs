use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("origin is not strictly inside the domain")]
    OriginOutside,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("eigensolver did not converge after {iterations} iterations (max residual {residual:.3e})")]
    EigenNonConvergence { iterations: usize, residual: f64 },

    #[error("alpha = {alpha} is resonant with eigenvalue {eigenvalue}")]
    Resonance { alpha: f64, eigenvalue: f64 },

    #[error("negative radicand in the (1,alpha) norm: {0:.6e}")]
    NotANorm(f64),

    #[error("point ({0:.6e}, {1:.6e}) lies outside the mesh")]
    OutsideMesh(f64, f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
