//! Trajectory sampling and empirical MDP reconstruction.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::bsm::{compute_dt_bsm, scalarize, BsmConfig, ScalarMode};
use crate::error::{invalid, Error, Result};
use crate::mdp::{check_distribution, inverse_cdf, FiniteMdp, Policy};
use crate::seed::rng_from_seed;
use crate::stats::median;

/// Reward assigned to never-visited `(s, a)` pairs.
pub const UNVISITED_REWARD: f64 = 0.5;

/// One observed transition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionSample {
    /// Global step index.
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub sn: usize,
    pub episode: usize,
}

/// How actions are chosen while sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum Behavior {
    UniformRandom,
    Policy(Policy),
}

impl Behavior {
    pub fn describe(&self) -> String {
        match self {
            Behavior::UniformRandom => "uniform-random".into(),
            Behavior::Policy(Policy::Deterministic(_)) => "policy:deterministic".into(),
            Behavior::Policy(Policy::Stochastic(_)) => "policy:stochastic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub samples: Vec<TransitionSample>,
    pub seed: u64,
    pub behavior: String,
}

impl TrajectoryBatch {
    /// Within each episode, `sn` of one sample equals `s` of the next.
    pub fn is_chained(&self) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[0].episode != w[1].episode || w[0].sn == w[1].s)
    }
}

/// Sample `n_steps` transitions, restarting from the uniform distribution
/// every `episode_length` steps.
pub fn sample_trajectories(
    env: &FiniteMdp,
    behavior: &Behavior,
    n_steps: usize,
    episode_length: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    let rho = vec![1.0 / env.n_states() as f64; env.n_states()];
    sample_trajectories_from(env, behavior, n_steps, episode_length, &rho, seed)
}

/// [`sample_trajectories`] with an explicit start distribution.
pub fn sample_trajectories_from(
    env: &FiniteMdp,
    behavior: &Behavior,
    n_steps: usize,
    episode_length: usize,
    rho: &[f64],
    seed: u64,
) -> Result<TrajectoryBatch> {
    if n_steps == 0 {
        return Err(invalid("n_steps must be at least 1"));
    }
    if episode_length == 0 {
        return Err(invalid("episode_length must be at least 1"));
    }
    check_distribution(rho, env.n_states(), "initial distribution")?;
    if let Behavior::Policy(p) = behavior {
        p.check(env)?;
    }
    let mut rng = rng_from_seed(seed);
    let mut samples = Vec::with_capacity(n_steps);
    let mut s = 0;
    for t in 0..n_steps {
        if t % episode_length == 0 {
            s = inverse_cdf(rho, rng.random());
        }
        let a = match behavior {
            Behavior::UniformRandom => rng.random_range(0..env.n_actions()),
            Behavior::Policy(p) => p.sample(s, &mut rng),
        };
        let (r, sn) = env.step(s, a, &mut rng)?;
        samples.push(TransitionSample { t, s, a, r, sn, episode: t / episode_length });
        s = sn;
    }
    Ok(TrajectoryBatch { samples, seed, behavior: behavior.describe() })
}

/// Count-based MDP estimate with additive smoothing `kappa`:
/// `P(s'|s,a) = (N(s,a,s') + kappa) / (N(s,a) + kappa * n_states)`.
/// Unvisited pairs get the uniform row and reward [`UNVISITED_REWARD`].
pub fn estimate_mdp(
    batch: &TrajectoryBatch,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    kappa: f64,
) -> Result<FiniteMdp> {
    if batch.samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(invalid("kappa must be finite and nonnegative"));
    }
    let mut counts = vec![0u64; n_states * n_actions * n_states];
    let mut visits = vec![0u64; n_states * n_actions];
    let mut reward_sum = vec![0.0; n_states * n_actions];
    for x in &batch.samples {
        for (what, idx, bound) in [("state", x.s, n_states), ("action", x.a, n_actions), ("state", x.sn, n_states)] {
            if idx >= bound {
                return Err(Error::IndexOutOfRange { what, index: idx, bound });
            }
        }
        let sa = x.s * n_actions + x.a;
        counts[sa * n_states + x.sn] += 1;
        visits[sa] += 1;
        reward_sum[sa] += x.r;
    }
    let mut p = vec![0.0; n_states * n_actions * n_states];
    let mut r = vec![UNVISITED_REWARD; n_states * n_actions];
    let uniform = 1.0 / n_states as f64;
    for sa in 0..n_states * n_actions {
        let row = &mut p[sa * n_states..(sa + 1) * n_states];
        let n = visits[sa];
        if n == 0 {
            row.fill(uniform);
            continue;
        }
        r[sa] = reward_sum[sa] / n as f64;
        let denom = n as f64 + kappa * n_states as f64;
        for (dst, &c) in row.iter_mut().zip(&counts[sa * n_states..(sa + 1) * n_states]) {
            *dst = (c as f64 + kappa) / denom;
        }
    }
    FiniteMdp::new(n_states, n_actions, p, r, gamma)
}

/// Options for [`sample_sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub episode_length: usize,
    pub kappa: f64,
    pub bsm: BsmConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { episode_length: 10, kappa: 0.0, bsm: BsmConfig::default() }
    }
}

/// One point of a sample-complexity curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub n_steps: usize,
    /// Median over seeds of the worst-case mismatch.
    pub median: f64,
    /// Per-seed worst-case mismatch, in seed order.
    pub values: Vec<f64>,
}

/// Empirical sample-complexity curve: for each size and seed, sample from
/// `env` (uniform-random behavior, sampling seed = the listed seed), estimate
/// an MDP and measure its worst-case mismatch against `truth`.
pub fn sample_sweep(
    env: &FiniteMdp,
    truth: &FiniteMdp,
    sizes: &[usize],
    seeds: &[u64],
    options: &SweepOptions,
) -> Result<Vec<SweepPoint>> {
    if sizes.is_empty() || seeds.is_empty() {
        return Err(invalid("sweep needs at least one size and one seed"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("sweep sizes must be strictly increasing"));
    }
    sizes
        .iter()
        .map(|&n_steps| {
            let values = seeds
                .iter()
                .map(|&seed| {
                    let batch = sample_trajectories(env, &Behavior::UniformRandom, n_steps, options.episode_length, seed)?;
                    let est = estimate_mdp(&batch, truth.n_states(), truth.n_actions(), truth.gamma(), options.kappa)?;
                    let metric = compute_dt_bsm(truth, &est, &options.bsm)?;
                    Ok(scalarize(&metric, ScalarMode::WorstCase, None)?.scalar_max)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepPoint { n_steps, median: median(&values), values })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FiniteMdp {
        FiniteMdp::new(2, 2, vec![0.5, 0.5, 0.0, 1.0, 1.0, 0.0, 0.3, 0.7], vec![0.1, 0.9, 0.5, 0.3], 0.9).unwrap()
    }

    #[test]
    fn count_and_chaining() {
        let batch = sample_trajectories(&two_state(), &Behavior::UniformRandom, 100, 7, 1).unwrap();
        assert_eq!(batch.samples.len(), 100);
        assert!(batch.is_chained());
        for (t, x) in batch.samples.iter().enumerate() {
            assert_eq!(x.t, t);
            assert_eq!(x.episode, t / 7);
        }
        assert_eq!(batch.behavior, "uniform-random");
    }

    #[test]
    fn same_seed_same_batch() {
        let a = sample_trajectories(&two_state(), &Behavior::UniformRandom, 500, 10, 4).unwrap();
        let b = sample_trajectories(&two_state(), &Behavior::UniformRandom, 500, 10, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_single_state() {
        let env = FiniteMdp::new(1, 2, vec![1.0, 1.0], vec![0.25, 0.25], 0.9).unwrap();
        let batch = sample_trajectories(&env, &Behavior::UniformRandom, 50, 5, 0).unwrap();
        assert!(batch.samples.iter().all(|x| x.s == 0 && x.sn == 0 && x.r == 0.25));
    }

    #[test]
    fn policy_behavior() {
        let batch =
            sample_trajectories(&two_state(), &Behavior::Policy(Policy::constant(2, 1)), 50, 5, 0).unwrap();
        assert!(batch.samples.iter().all(|x| x.a == 1));
        let bad = sample_trajectories(&two_state(), &Behavior::Policy(Policy::constant(2, 5)), 5, 5, 0);
        assert!(bad.is_err());
        assert!(sample_trajectories(&two_state(), &Behavior::UniformRandom, 0, 5, 0).is_err());
    }

    fn batch_of(samples: &[(usize, usize, f64, usize)]) -> TrajectoryBatch {
        TrajectoryBatch {
            samples: samples
                .iter()
                .enumerate()
                .map(|(t, &(s, a, r, sn))| TransitionSample { t, s, a, r, sn, episode: t })
                .collect(),
            seed: 0,
            behavior: "test".into(),
        }
    }

    #[test]
    fn estimate_from_two_samples() {
        let batch = batch_of(&[(0, 0, 1.0, 1), (0, 0, 1.0, 1)]);
        let m = estimate_mdp(&batch, 2, 1, 0.9, 0.0).unwrap();
        assert_eq!(m.row(0, 0), &[0.0, 1.0]);
        assert_eq!(m.reward(0, 0), 1.0);
        assert_eq!(m.row(1, 0), &[0.5, 0.5]);
        assert_eq!(m.reward(1, 0), UNVISITED_REWARD);
    }

    #[test]
    fn smoothing_formula() {
        let batch = batch_of(&[(0, 0, 0.2, 0), (0, 0, 0.2, 0), (0, 0, 0.2, 0), (0, 0, 0.2, 1)]);
        let m = estimate_mdp(&batch, 2, 1, 0.9, 1.0).unwrap();
        assert!((m.row(0, 0)[0] - 4.0 / 6.0).abs() < 1e-15);
        assert!((m.row(0, 0)[1] - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.row(1, 0), &[0.5, 0.5]);
    }

    #[test]
    fn estimate_errors() {
        let empty = batch_of(&[]);
        assert_eq!(estimate_mdp(&empty, 2, 1, 0.9, 0.0), Err(Error::EmptyBatch));
        let bad = batch_of(&[(0, 3, 0.2, 0)]);
        assert!(matches!(estimate_mdp(&bad, 2, 1, 0.9, 0.0), Err(Error::IndexOutOfRange { .. })));
        assert!(estimate_mdp(&batch_of(&[(0, 0, 0.2, 0)]), 2, 1, 0.9, -1.0).is_err());
    }

    #[test]
    fn full_coverage_recovers_rewards_exactly() {
        let env = two_state();
        let batch = sample_trajectories(&env, &Behavior::UniformRandom, 2000, 4, 3).unwrap();
        let m = estimate_mdp(&batch, 2, 2, 0.9, 0.0).unwrap();
        for (a, b) in m.rewards().iter().zip(env.rewards()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_validates_sizes() {
        let env = two_state();
        let opts = SweepOptions::default();
        assert!(sample_sweep(&env, &env, &[100, 100], &[1], &opts).is_err());
        assert!(sample_sweep(&env, &env, &[], &[1], &opts).is_err());
        let pts = sample_sweep(&env, &env, &[200], &[5], &opts).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].values.len(), 1);
        assert_eq!(pts[0].median, pts[0].values[0]);
    }
}
