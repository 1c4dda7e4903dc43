use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid context DAG: {0}")]
    InvalidDag(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("value iteration diverged after {iterations} iterations")]
    Diverged { iterations: usize },
    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown context variable `{0}`")]
    UnknownVariable(String),
    #[error("context label is ambiguous: {0} paths match")]
    AmbiguousLabel(usize),
    #[error("no context path matches the label")]
    NoMatchingPath,
    #[error("value `{value}` out of range for variable `{variable}`")]
    ValueOutOfRange { variable: String, value: String },
    #[error("context is not valid for this DAG")]
    UnknownContext,
    #[error("reward is all zero and cannot be normalized")]
    ZeroReward,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },
}

pub type Result<T> = core::result::Result<T, Error>;
