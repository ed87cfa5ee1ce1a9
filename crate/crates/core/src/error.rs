use thiserror::Error;

/// Errors raised by the decomposition library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("incompatible dictionaries: {0}")]
    Compatibility(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("degenerate conjugate pair: |<d, conj d>| = {0}")]
    DegeneratePair(f64),
    #[error("dictionary does not span the signal space (smallest frame bound {0:e})")]
    NotSpanning(f64),
    #[error("oracle size guard exceeded: {0}")]
    SizeGuard(String),
    #[error("step refused: {0:?}")]
    Stopped(crate::engine::StopReason),
    #[error("kernel cache: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, MpError>;
