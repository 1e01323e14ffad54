//! Tabular MDPs.
//!
//! A [`FiniteMdp`] stores a dense transition tensor `P[s][a][s']` and reward
//! matrix `R[s][a]` with rewards normalized to `[0, 1]`, plus a discount
//! `0 < gamma < 1`. It is immutable once built and serves both as the real
//! environment and as every candidate twin.

mod planning;
mod qlearn;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};

use crate::error::{invalid, Error, Result};
use crate::PROB_TOL;

pub use planning::{
    accurate_policy_values, greedy_policy, optimal_values, policy_evaluation, suboptimality,
    uniform_distribution, value_iteration, Planned,
};
pub(crate) use planning::{check_distribution, clamp_gap};

pub use qlearn::{q_learning, Exploration, LearningRate, QLearningConfig, QLearningOutcome};

/// One broken [`FiniteMdp`] invariant.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Violation {
    Shape { field: &'static str, expected: usize, found: usize },
    EmptySpace { field: &'static str },
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    RewardOutOfRange { state: usize, action: usize, value: f64 },
    Gamma { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { field, expected, found } => {
                write!(f, "{field}: expected {expected} entries, found {found}")
            }
            Violation::EmptySpace { field } => write!(f, "{field} must be positive"),
            Violation::NegativeProbability { state, action, next, value } => write!(
                f,
                "transition ({state},{action})->{next} is negative or not finite ({value})"
            ),
            Violation::RowSum { state, action, sum } => {
                write!(f, "transition row ({state},{action}) sums to {sum}, not 1")
            }
            Violation::RewardOutOfRange { state, action, value } => {
                write!(f, "reward ({state},{action}) = {value} out of [0,1]")
            }
            Violation::Gamma { value } => write!(f, "gamma {value} not in (0,1)"),
        }
    }
}

/// A finite discounted MDP with normalized rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    /// Row-major `[s][a][s']`.
    transitions: Vec<f64>,
    /// Row-major `[s][a]`.
    rewards: Vec<f64>,
    state_labels: Option<Vec<String>>,
    action_labels: Option<Vec<String>>,
}

impl FiniteMdp {
    /// Build and validate an MDP from flat row-major arrays.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self::new_unchecked(n_states, n_actions, transitions, rewards, gamma);
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(violations))
        }
    }

    /// Build without checking invariants. Use [`FiniteMdp::validate`] to
    /// diagnose the result; the numerical routines assume a valid MDP.
    pub fn new_unchecked(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Self {
        Self {
            n_states,
            n_actions,
            gamma,
            transitions,
            rewards,
            state_labels: None,
            action_labels: None,
        }
    }

    /// Build from nested `[s][a][s']` / `[s][a]` arrays.
    pub fn from_nested(
        transitions: &[Vec<Vec<f64>>],
        rewards: &[Vec<f64>],
        gamma: f64,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, Vec::len);
        let mut flat_p = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "transitions[{s}] has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            for (a, dist) in row.iter().enumerate() {
                if dist.len() != n_states {
                    return Err(Error::ShapeMismatch(alloc::format!(
                        "transitions[{s}][{a}] has {} entries, expected {n_states}",
                        dist.len()
                    )));
                }
                flat_p.extend_from_slice(dist);
            }
        }
        let mut flat_r = Vec::with_capacity(n_states * n_actions);
        if rewards.len() != n_states {
            return Err(Error::ShapeMismatch(alloc::format!(
                "rewards has {} rows, expected {n_states}",
                rewards.len()
            )));
        }
        for (s, row) in rewards.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "rewards[{s}] has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            flat_r.extend_from_slice(row);
        }
        Self::new(n_states, n_actions, flat_p, flat_r, gamma)
    }

    /// Every broken invariant; empty iff the MDP is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 {
            out.push(Violation::EmptySpace { field: "n_states" });
        }
        if na == 0 {
            out.push(Violation::EmptySpace { field: "n_actions" });
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            out.push(Violation::Gamma { value: self.gamma });
        }
        let shapes_ok = self.transitions.len() == ns * na * ns && self.rewards.len() == ns * na;
        if self.transitions.len() != ns * na * ns {
            out.push(Violation::Shape {
                field: "transitions",
                expected: ns * na * ns,
                found: self.transitions.len(),
            });
        }
        if self.rewards.len() != ns * na {
            out.push(Violation::Shape {
                field: "rewards",
                expected: ns * na,
                found: self.rewards.len(),
            });
        }
        if !shapes_ok {
            return out;
        }
        for s in 0..ns {
            for a in 0..na {
                let row = self.row(s, a);
                let mut sum = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    if !(p >= 0.0 && p.is_finite()) {
                        out.push(Violation::NegativeProbability { state: s, action: a, next, value: p });
                    }
                    sum += p;
                }
                if !((sum - 1.0).abs() <= PROB_TOL) {
                    out.push(Violation::RowSum { state: s, action: a, sum });
                }
                let r = self.reward(s, a);
                if !(0.0..=1.0).contains(&r) {
                    out.push(Violation::RewardOutOfRange { state: s, action: a, value: r });
                }
            }
        }
        out
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Next-state distribution `P(.|s,a)`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    /// Flat `[s][a][s']` tensor.
    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// Flat `[s][a]` matrix.
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn state_labels(&self) -> Option<&[String]> {
        self.state_labels.as_deref()
    }

    pub fn action_labels(&self) -> Option<&[String]> {
        self.action_labels.as_deref()
    }

    pub fn with_state_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_states {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} state labels for {} states",
                labels.len(),
                self.n_states
            )));
        }
        self.state_labels = Some(labels);
        Ok(self)
    }

    pub fn with_action_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_actions {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} action labels for {} actions",
                labels.len(),
                self.n_actions
            )));
        }
        self.action_labels = Some(labels);
        Ok(self)
    }

    /// Copy of this MDP with replaced dynamics, keeping labels and discount.
    pub fn with_dynamics(&self, transitions: Vec<f64>, rewards: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(self.n_states, self.n_actions, transitions, rewards, self.gamma)?;
        m.state_labels.clone_from(&self.state_labels);
        m.action_labels.clone_from(&self.action_labels);
        Ok(m)
    }

    /// Largest possible value magnitude, `1 / (1 - gamma)`.
    pub fn value_bound(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub(crate) fn check_state(&self, s: usize) -> Result<()> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { what: "state", index: s, bound: self.n_states })
        }
    }

    pub(crate) fn check_action(&self, a: usize) -> Result<()> {
        if a < self.n_actions {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { what: "action", index: a, bound: self.n_actions })
        }
    }

    /// Simulate one transition from `(s, a)`.
    ///
    /// Draws exactly one uniform `u` in `[0, 1)` from `rng` and returns the
    /// first next state whose cumulative probability (in increasing state
    /// order) exceeds `u`. The reward is `R(s, a)`.
    pub fn step<R: RngCore + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<(f64, usize)> {
        self.check_state(s)?;
        self.check_action(a)?;
        let u: f64 = rng.random();
        Ok((self.reward(s, a), inverse_cdf(self.row(s, a), u)))
    }
}

/// Inverse-CDF lookup over a probability row. Falls back to the last state
/// with positive mass when rounding leaves `u` above the total.
pub(crate) fn inverse_cdf(row: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = i;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

/// An agent policy.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "action_of", rename_all = "snake_case"))]
pub enum Policy {
    /// One action per state.
    Deterministic(Vec<usize>),
    /// One action distribution per state.
    Stochastic(Vec<Vec<f64>>),
}

impl Policy {
    /// The same action in every state.
    pub fn constant(n_states: usize, action: usize) -> Self {
        Policy::Deterministic(vec![action; n_states])
    }

    /// Uniform over actions in every state.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy::Stochastic(vec![vec![1.0 / n_actions as f64; n_actions]; n_states])
    }

    pub fn n_states(&self) -> usize {
        match self {
            Policy::Deterministic(v) => v.len(),
            Policy::Stochastic(v) => v.len(),
        }
    }

    /// Check totality and row sums against an MDP.
    pub fn check(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.n_states() != mdp.n_states() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "policy covers {} states, MDP has {}",
                self.n_states(),
                mdp.n_states()
            )));
        }
        match self {
            Policy::Deterministic(actions) => {
                for &a in actions {
                    mdp.check_action(a)?;
                }
            }
            Policy::Stochastic(rows) => {
                for (s, row) in rows.iter().enumerate() {
                    if row.len() != mdp.n_actions() {
                        return Err(Error::ShapeMismatch(alloc::format!(
                            "policy row {s} has {} actions, MDP has {}",
                            row.len(),
                            mdp.n_actions()
                        )));
                    }
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROB_TOL {
                        return Err(invalid(alloc::format!(
                            "policy row {s} is not a distribution"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Deterministic action in `s`, if the policy is deterministic.
    pub fn action(&self, s: usize) -> Option<usize> {
        match self {
            Policy::Deterministic(v) => v.get(s).copied(),
            Policy::Stochastic(_) => None,
        }
    }

    /// Probability of `a` in `s`.
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        match self {
            Policy::Deterministic(v) => {
                if v[s] == a {
                    1.0
                } else {
                    0.0
                }
            }
            Policy::Stochastic(v) => v[s][a],
        }
    }

    /// Draw an action in `s` with one uniform draw.
    pub fn sample<R: RngCore + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        match self {
            Policy::Deterministic(v) => v[s],
            Policy::Stochastic(v) => {
                let u: f64 = rng.random();
                inverse_cdf(&v[s], u)
            }
        }
    }
}

/// State values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// `sum_s rho(s) V(s)`.
    pub fn weighted(&self, rho: &[f64]) -> f64 {
        self.0.iter().zip(rho).map(|(v, p)| v * p).sum()
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
