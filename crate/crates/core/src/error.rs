use thiserror::Error;

/// Errors raised by the lattice, matching, building and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid moment target: {0}")]
    InvalidTarget(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("point is not on the lattice (distance {distance:e} in lattice units)")]
    NotOnLattice { distance: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("exact match required but only an approximate match exists")]
    InexactOnly,

    #[error("support lower bound {lower} makes the moment problem infeasible")]
    ConstrainedInfeasible { lower: f64 },

    #[error("candidate window is empty")]
    EmptyCandidates,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state limit {limit} exceeded at step {step} ({states} states discovered)")]
    StateLimit { limit: usize, step: usize, states: usize },

    #[error("failed to solve row for state {state}: {reason}")]
    Row { state: String, reason: String },

    #[error("step {step} is beyond the chain horizon {n}")]
    Range { step: usize, n: usize },

    #[error("{bad} of {total} Monte Carlo paths became non-finite")]
    NonFinitePaths { bad: usize, total: usize },

    #[error("transform is not strictly monotone: {0}")]
    NonMonotone(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
