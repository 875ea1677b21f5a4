//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A deadline too tight for the given durations (earliest finish of the
    /// end node exceeds it).
    #[error("infeasible deadline: earliest project finish {makespan} exceeds deadline {deadline}")]
    InfeasibleDeadline { makespan: u32, deadline: u32 },

    /// Start-time constraints admit no feasible schedule.
    #[error("infeasible constraints: {0}")]
    InfeasibleConstraints(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("instance generation failed after {0} attempts")]
    GenerationRetriesExceeded(u32),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format version {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scenario index {index} out of range ({count} scenarios)")]
    ScenarioOutOfRange { index: usize, count: usize },

    #[error("infeasible action {action} in current state")]
    InfeasibleAction { action: usize },

    #[error("no feasible action available")]
    EmptyFeasibleSet,

    #[error("no scenario is consistent with the observed history")]
    NoConsistentScenario,

    #[error("state space limit exceeded: {visited} states (limit {limit})")]
    StateSpaceExceeded { visited: usize, limit: usize },

    #[error("enumeration limit exceeded: {0}")]
    LimitExceeded(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
