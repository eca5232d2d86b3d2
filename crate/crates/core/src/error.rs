use thiserror::Error;

/// Errors raised by the model, analytics and scheduling layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid headway matrix: {0}")]
    InvalidHeadway(String),

    #[error("invalid crossing-time distribution: {0}")]
    InvalidCrossingTime(String),

    #[error("invalid demand: {0}")]
    InvalidDemand(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("invalid approach geometry: {0}")]
    InvalidApproach(String),

    #[error("negative time step {0}")]
    NegativeStep(f64),

    #[error("kinematically impossible state: {0}")]
    InfeasibleState(String),

    #[error("vehicle {vehicle} departs at {departure} before its arrival at {arrival}")]
    DepartureBeforeArrival {
        vehicle: String,
        departure: f64,
        arrival: f64,
    },

    #[error("operation requires the {expected} policy, got {got}")]
    WrongPolicy { expected: &'static str, got: String },

    #[error("safety gap violated at t={time:.3}: {follower} is {gap:.3} m behind {leader}")]
    SafetyViolation {
        time: f64,
        leader: String,
        follower: String,
        gap: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
