use thiserror::Error;

/// Errors raised by model construction, the recursion and the fitting pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "predictive density underflow at observation {index} (z = {z}, mu = {mu}, sigma = {sigma}, tau = {tau})"
    )]
    DensityUnderflow {
        index: usize,
        z: f64,
        mu: f64,
        sigma: f64,
        tau: f64,
    },

    #[error("non-finite gradient component {component} at observation {index}")]
    NonFiniteGradient { index: usize, component: usize },

    #[error("permutation {permutation} failed: {source}")]
    Permutation {
        permutation: usize,
        #[source]
        source: Box<PrError>,
    },

    #[error("objective is not finite at the starting point")]
    NonFiniteStart,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, PrError>;
