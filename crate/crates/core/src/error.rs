use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A segment has zero or negative duration.
    #[error("agent {agent}: segment {segment} has non-positive duration {duration}")]
    DegenerateDuration {
        agent: usize,
        segment: usize,
        duration: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid path for agent {agent}: {reason}")]
    InvalidPath { agent: usize, reason: String },

    /// Timing vector length does not match the waypoint count.
    #[error("agent {agent}: expected {expected} passage times, got {got}")]
    LengthMismatch {
        agent: usize,
        expected: usize,
        got: usize,
    },

    /// The prescribed arrival cannot be met within the speed bounds.
    #[error("agent {agent}: fixed arrival {arrival} s is outside the reachable window [{earliest}, {latest}] s")]
    InfeasibleArrival {
        agent: usize,
        arrival: f64,
        earliest: f64,
        latest: f64,
    },

    #[error("scenario generation failed: {0}")]
    GenerationFailed(String),
}
