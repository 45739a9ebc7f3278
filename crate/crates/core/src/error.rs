use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty region")]
    EmptyRegion,

    #[error("site dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("lattice dimension mismatch: expected D={expected}, got D={got}")]
    LatticeDimMismatch { expected: usize, got: usize },

    #[error("site {site} lies outside the box {extent:?}")]
    OutOfBox { site: String, extent: Vec<usize> },

    #[error("support {support} is not contained in {region}")]
    SupportNotContained { support: String, region: String },

    #[error("Hilbert dimension {dim} exceeds the cap {cap} (set LR_ERGO_DIM_CAP to override)")]
    DimCapExceeded { dim: u128, cap: usize },

    #[error("operator is not self-adjoint (deviation {deviation:e})")]
    NotSelfAdjoint { deviation: f64 },

    #[error("imaginary-time overflow guard: beta * spectral spread = {product} > {limit}")]
    OverflowGuard { product: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("open-boundary safe window exceeded: {0}")]
    SafeWindowExceeded(String),

    #[error("wrap-around guard: {0}")]
    WrapGuard(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
