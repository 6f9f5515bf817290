use ddrhc_core::{NetworkError, ScheduleError, SynthesisError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LeoError {
    #[error("invalid constellation: {0}")]
    InvalidConfig(String),
    #[error("satellite {sat} out of range for a fleet of {count}")]
    SatelliteOutOfRange { sat: usize, count: usize },
    #[error("satellite {sat} ran out of propellant (mass {mass} kg)")]
    PropellantExhausted { sat: usize, mass: f64 },
    #[error("expected {expected} satellite states, got {got}")]
    FleetSizeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}
