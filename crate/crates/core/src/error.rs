use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("horizon mismatch: expected {expected} states, got {actual}")]
    HorizonMismatch { expected: usize, actual: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("singular matrix in Riccati recursion at step {0}")]
    Singular(usize),
    #[error(
        "joint mode enumeration too large ({combos} combinations > {limit}); \
         hierarchical coordination is required for this team size"
    )]
    EnumerationTooLarge { combos: u128, limit: u128 },
    #[error("malformed serialized data: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, PlanError>;
