use thiserror::Error;

/// Domain errors raised by the model, pricing and conversion layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("state index {index} out of range for a {len}-state space")]
    StateOutOfRange { index: usize, len: usize },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("age {age} outside the kernel domain [{min}, {max}]")]
    AgeOutOfRange { age: i64, min: u32, max: u32 },
    #[error("backward duration {backward} exceeds the maximum sojourn {max_sojourn}")]
    BackwardTooLong { backward: u32, max_sojourn: u32 },
    #[error("backward duration {backward} exceeds the age {age}")]
    BackwardExceedsAge { backward: u32, age: u32 },
    #[error("time {to} precedes time {from}")]
    TimeOrder { from: i64, to: i64 },
    #[error("time {time} lies beyond the maximum age (age at that time would be {age})")]
    BeyondMaxAge { time: i64, age: i64 },
    #[error("impossible conditioning: state {state} with backward {backward} at age {age}, time {time} has zero probability")]
    ImpossibleConditioning {
        state: usize,
        backward: u32,
        age: u32,
        time: i64,
    },
    #[error("scenario is in the death state")]
    DeadScenario,
    #[error("embedded probabilities are undefined from the death state")]
    FromDeathState,
    #[error("invalid contract terms: {0}")]
    InvalidTerms(String),
    #[error("invalid discount curve: {0}")]
    InvalidDiscount(String),
    #[error("no premium basis: the premium annuity is zero")]
    NoPremiumBasis,
    #[error("n-scenario ({state}, {backward}) is unreachable")]
    Unreachable { state: usize, backward: u32 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
