//! Task-centric fidelity evaluation for digital twins of finite MDPs.
//!
//! The crate compares a "real" environment MDP with a candidate twin MDP
//! through the bisimulation fixed point
//!
//! ```text
//! d(s, s') = max_a { |R(s,a) - R'(s',a)| + gamma * W1(P(.|s,a), P'(.|s',a); d) }
//! ```
//!
//! and uses the resulting mismatch value to rank candidate twins before any
//! agent is trained on them.
//!
//! Modules, bottom up:
//!
//! - [`mdp`]: tabular MDPs, exact planning, policy evaluation, sampling and
//!   tabular Q-learning.
//! - [`transport`]: exact (transportation simplex) and entropic (Sinkhorn)
//!   Wasserstein-1 solvers.
//! - [`bsm`]: the pairwise metric, its scalar reductions and the drift trigger.
//! - [`estimation`]: trajectory sampling and empirical MDP reconstruction.
//! - [`envgen`]: the synthetic wireless resource-allocation environment and
//!   the candidate-twin pool.
//! - [`harness`]: per-candidate train/deploy runs, selection strategies, cost
//!   accounting and the additive bound fit.
//!
//! The crate is `no_std` (it needs `alloc`). The `std` feature only switches
//! the error type to `std::error::Error`; all IO lives in the `twinfid` crate.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bsm;
pub mod envgen;
mod error;
pub mod estimation;
pub mod harness;
mod math;
pub mod mdp;
pub mod seed;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use mdp::{FiniteMdp, Policy, ValueFunction};

/// Row-sum tolerance for probability vectors.
pub const PROB_TOL: f64 = 1e-9;

/// Default tolerance for planning (value iteration, policy evaluation).
pub const PLANNING_TOL: f64 = 1e-8;

/// Default tolerance for metric work.
pub const METRIC_TOL: f64 = 1e-6;

/// Default discount factor.
pub const DEFAULT_GAMMA: f64 = 0.9;
