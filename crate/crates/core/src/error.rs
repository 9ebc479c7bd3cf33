use thiserror::Error;

/// Errors raised by the analysis engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("site index {index} out of range for a ring of {n} players")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("a ring needs at least 3 players, got {0}")]
    TooFewPlayers(usize),

    #[error("state space too large: {n} players exceeds the cap of {cap}")]
    StateSpaceTooLarge { n: usize, cap: usize },

    #[error("probability p{index} = {value} is outside [0, 1]")]
    InvalidProbability { index: usize, value: f64 },

    #[error("mixing weight gamma = {0} is outside the allowed range")]
    InvalidGamma(f64),

    #[error("periodic pattern needs r >= 1 and s >= 1, got r = {r}, s = {s}")]
    InvalidPattern { r: usize, s: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid cylinder function: {0}")]
    InvalidCylinder(String),

    #[error("ring of {n} players is too small for half-width {k} (needs at least {needed})")]
    RingTooSmall { n: usize, k: usize, needed: usize },

    #[error(
        "stationary solver did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("chain on {n} players is reducible at these parameters (or too large to verify at a boundary point)")]
    Reducible { n: usize },

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("cross-check failed: {0}")]
    CrossCheck(String),
}

pub type Result<T> = std::result::Result<T, Error>;
