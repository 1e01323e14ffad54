//! Tabular Q-learning against an MDP used as a simulator.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::planning::check_distribution;
use super::{inverse_cdf, FiniteMdp, Policy};
use crate::error::{invalid, Result};
use crate::seed::rng_from_seed;

/// Step size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LearningRate {
    Constant(f64),
    /// `1 / (1 + n)^exponent` with `n` the number of prior visits to `(s, a)`.
    Harmonic { exponent: f64 },
}

impl LearningRate {
    fn at(&self, visits: u32) -> f64 {
        match *self {
            LearningRate::Constant(a) => a,
            LearningRate::Harmonic { exponent } => {
                libm::pow(1.0 + f64::from(visits), -exponent)
            }
        }
    }
}

/// Epsilon-greedy exploration schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Exploration {
    Constant(f64),
    /// Linear interpolation from `start` to `end` over `episodes`, then `end`.
    Linear { start: f64, end: f64, episodes: usize },
}

impl Exploration {
    fn at(&self, episode: usize) -> f64 {
        match *self {
            Exploration::Constant(e) => e,
            Exploration::Linear { start, end, episodes } => {
                if episodes == 0 || episode >= episodes {
                    end
                } else {
                    start + (end - start) * episode as f64 / episodes as f64
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QLearningConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub learning_rate: LearningRate,
    pub exploration: Exploration,
    pub seed: u64,
    /// Start-state distribution; uniform when `None`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub initial: Option<Vec<f64>>,
}

impl QLearningConfig {
    pub fn new(episodes: usize, horizon: usize, seed: u64) -> Self {
        Self {
            episodes,
            horizon,
            learning_rate: LearningRate::Constant(0.1),
            exploration: Exploration::Constant(0.1),
            seed,
            initial: None,
        }
    }

    fn check(&self, n_states: usize) -> Result<()> {
        match self.learning_rate {
            LearningRate::Constant(a) if !(a > 0.0 && a <= 1.0) => {
                return Err(invalid("constant learning rate must lie in (0, 1]"));
            }
            LearningRate::Harmonic { exponent } if !(exponent > 0.0 && exponent <= 1.0) => {
                return Err(invalid("harmonic exponent must lie in (0, 1]"));
            }
            _ => {}
        }
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        let ok = match self.exploration {
            Exploration::Constant(e) => eps_ok(e),
            Exploration::Linear { start, end, .. } => eps_ok(start) && eps_ok(end),
        };
        if !ok {
            return Err(invalid("exploration rate must lie in [0, 1]"));
        }
        if self.episodes > 0 && self.horizon == 0 {
            return Err(invalid("horizon must be positive"));
        }
        if let Some(rho) = &self.initial {
            check_distribution(rho, n_states, "initial distribution")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QLearningOutcome {
    /// Greedy w.r.t. the final table, lowest action index on ties.
    pub policy: Policy,
    /// Row-major `[s][a]`.
    pub q: Vec<f64>,
    /// `sum_s rho(s) max_a Q(s, a)` under the start distribution.
    pub return_estimate: f64,
    pub updates: usize,
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &q) in row.iter().enumerate().skip(1) {
        if q > row[best] {
            best = a;
        }
    }
    best
}

/// Q-learning with epsilon-greedy exploration, bootstrapping through the
/// horizon cut (episodes are time limits, not terminations).
pub fn q_learning(mdp: &FiniteMdp, config: &QLearningConfig) -> Result<QLearningOutcome> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    config.check(ns)?;
    let rho = config.initial.clone().unwrap_or_else(|| vec![1.0 / ns as f64; ns]);
    let gamma = mdp.gamma();
    let mut rng = rng_from_seed(config.seed);
    let mut q = vec![0.0; ns * na];
    let mut visits = vec![0u32; ns * na];
    let mut updates = 0;
    for episode in 0..config.episodes {
        let eps = config.exploration.at(episode);
        let mut s = inverse_cdf(&rho, rng.random());
        for _ in 0..config.horizon {
            let explore: f64 = rng.random();
            let a = if explore < eps {
                rng.random_range(0..na)
            } else {
                argmax_lowest(&q[s * na..(s + 1) * na])
            };
            let (r, sn) = mdp.step(s, a, &mut rng)?;
            let target = r + gamma * q[sn * na..(sn + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let idx = s * na + a;
            let alpha = config.learning_rate.at(visits[idx]);
            q[idx] += alpha * (target - q[idx]);
            visits[idx] = visits[idx].saturating_add(1);
            updates += 1;
            s = sn;
        }
    }
    let policy = Policy::Deterministic((0..ns).map(|s| argmax_lowest(&q[s * na..(s + 1) * na])).collect());
    let return_estimate = (0..ns)
        .map(|s| rho[s] * q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    Ok(QLearningOutcome { policy, q, return_estimate, updates })
}
