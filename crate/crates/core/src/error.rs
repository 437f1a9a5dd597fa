use thiserror::Error;

use crate::network::StabilityKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate network: solved throughputs lambda1={lambda1}, lambda2={lambda2} must both be positive")]
    DegenerateNetwork { lambda1: f64, lambda2: f64 },

    #[error("exponent {exponent} exceeds the representable range")]
    Overflow { exponent: f64 },

    #[error("theta1={theta1} lies outside the span of the level curve")]
    OutOfRange { theta1: f64 },

    #[error("jump measure is not steep: {0}")]
    NonSteep(String),

    #[error("no sign change of the profile up to theta1={upper}")]
    NoSignChange { upper: f64 },

    #[error("both roots qualify as the jitter point: x={roots:?}")]
    AmbiguousRoot { roots: Vec<f64> },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("large-deviation analysis requires a stable network, got {0:?}")]
    RejectsUnstable(StabilityKind),

    #[error("velocity ({v1}, {v2}) lies outside the interior of the velocity cone")]
    Unattainable { v1: f64, v2: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConverged { iterations: usize, residual: f64 },

    #[error("regenerative cycle exceeded {max_events} events")]
    CycleCap { max_events: u64 },

    #[error("only {hits} excursions reached level {level}; need at least {required}")]
    InsufficientHits {
        level: u32,
        hits: usize,
        required: usize,
    },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}
