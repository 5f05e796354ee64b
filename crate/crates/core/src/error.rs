use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ring size must be at least 1")]
    EmptyRing,

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("{what} = {value} is outside {range}")]
    ProbabilityOutOfRange {
        what: String,
        value: f64,
        range: &'static str,
    },

    #[error("type-{vehicle_type} vehicles never leave the ring (all departure probabilities are zero)")]
    VehiclesNeverLeave { vehicle_type: usize },

    #[error("type {vehicle_type} is exempt from departing but has arrival probability {p}")]
    ExemptTypeWithArrivals { vehicle_type: usize, p: f64 },

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("type-{vehicle_type} vehicles are exempt from departing; their dwell time is infinite")]
    InfiniteDwell { vehicle_type: usize },

    #[error("infinite visit count for type {vehicle_type} carries non-zero mass")]
    InfiniteLoad { vehicle_type: usize },

    #[error("traffic equations are singular")]
    SingularSystem,

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("trajectory too short: need time {needed}, have {available}")]
    HorizonTooShort { needed: u64, available: u64 },

    #[error("invalid slotted-ring specification: {0}")]
    InvalidSlottedSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
