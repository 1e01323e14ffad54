use alloc::string::String;
use alloc::vec::Vec;

use crate::mdp::Violation;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid MDP: {} violation(s), first: {}", .0.len(), .0.first().map(|v| alloc::format!("{v}")).unwrap_or_default())]
    InvalidMdp(Vec<Violation>),

    #[error("{what} index {index} out of range (< {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not converged after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("source mass {source_mass} and target mass {target_mass} differ")]
    InfeasibleMass { source_mass: f64, target_mass: f64 },

    #[error("transport simplex exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("action spaces differ: {real} vs {dt}")]
    ActionSpaceMismatch { real: usize, dt: usize },

    #[error("discount factors differ: {real} vs {dt}")]
    DiscountMismatch { real: f64, dt: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty trajectory batch")]
    EmptyBatch,

    #[error("environment too large: {entries} transition entries exceed budget {budget}")]
    SpecTooLarge { entries: u128, budget: u128 },

    #[error("empty candidate pool")]
    EmptyPool,

    #[error("bound fit is infeasible: run {0} has zero mismatch and zero training gap but positive deployment gap")]
    Degenerate(usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
