//! Wireless resource-allocation environment and digital-twin candidate pools.
//!
//! A base station splits `n_blocks` resource blocks among `n_ues` users each
//! step. The state is the vector of per-user backlog levels, encoded in mixed
//! radix with user 0 most significant. Actions enumerate all allocations of
//! the blocks in ascending lexicographic order of the allocation vector.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::estimation::{estimate_mdp, sample_trajectories, Behavior};
use crate::mdp::FiniteMdp;
use crate::seed::{child_seed, rng_from_seed};

/// Per-step arrival distribution of one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ArrivalProfile {
    Periodic,
    Bursty,
    Steady,
}

impl ArrivalProfile {
    /// `(packets, probability)` pairs.
    pub fn outcomes(self) -> &'static [(usize, f64)] {
        match self {
            ArrivalProfile::Periodic => &[(1, 0.9), (2, 0.1)],
            ArrivalProfile::Bursty => &[(0, 0.7), (3, 0.3)],
            ArrivalProfile::Steady => &[(1, 0.8), (2, 0.2)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EnvSpec {
    pub n_ues: usize,
    pub n_blocks: usize,
    pub backlog_levels: usize,
    /// Priority weights, normalized to sum 1 when used.
    pub weights: Vec<f64>,
    pub arrival_profiles: Vec<ArrivalProfile>,
    pub capacity_per_block: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Upper bound on `|S|^2 * |A|`, the transition tensor size.
    pub max_entries: u64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            n_ues: 3,
            n_blocks: 3,
            backlog_levels: 3,
            weights: vec![3.0, 2.0, 1.0],
            arrival_profiles: vec![ArrivalProfile::Periodic, ArrivalProfile::Bursty, ArrivalProfile::Steady],
            capacity_per_block: 1,
            gamma: 0.9,
            seed: 0,
            max_entries: 10_000_000,
        }
    }
}

fn count_allocations(n_blocks: usize, n_ues: usize) -> u128 {
    // C(n_blocks + n_ues - 1, n_ues - 1)
    let k = n_ues as u128 - 1;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n_blocks as u128 + k - i) / (i + 1);
    }
    c
}

impl EnvSpec {
    pub fn check(&self) -> Result<()> {
        if self.n_ues == 0 || self.n_blocks == 0 {
            return Err(invalid("n_ues and n_blocks must be at least 1"));
        }
        if self.backlog_levels < 2 {
            return Err(invalid("backlog_levels must be at least 2"));
        }
        if self.capacity_per_block == 0 {
            return Err(invalid("capacity_per_block must be at least 1"));
        }
        if self.weights.len() != self.n_ues || self.arrival_profiles.len() != self.n_ues {
            return Err(Error::ShapeMismatch(format!(
                "{} users but {} weights and {} arrival profiles",
                self.n_ues,
                self.weights.len(),
                self.arrival_profiles.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("weights must be nonnegative with a positive sum"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma must lie in (0, 1)"));
        }
        let states = (self.backlog_levels as u128).checked_pow(self.n_ues as u32);
        let entries = states
            .and_then(|s| s.checked_mul(s))
            .and_then(|s2| s2.checked_mul(count_allocations(self.n_blocks, self.n_ues)))
            .unwrap_or(u128::MAX);
        if entries > self.max_entries as u128 {
            return Err(Error::SpecTooLarge { entries, budget: self.max_entries as u128 });
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.backlog_levels.pow(self.n_ues as u32)
    }

    pub fn n_actions(&self) -> usize {
        count_allocations(self.n_blocks, self.n_ues) as usize
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// All allocations of `n_blocks` among the users, lexicographically ascending.
    pub fn allocations(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = vec![0; self.n_ues];
        fill_allocations(&mut cur, 0, self.n_blocks, &mut out);
        out
    }

    /// Largest achievable weighted service; rewards are divided by it.
    fn reward_norm(&self) -> f64 {
        let cap = (self.backlog_levels - 1).min(self.n_blocks * self.capacity_per_block);
        self.normalized_weights().iter().map(|w| w * cap as f64).sum()
    }

    pub fn decode_state(&self, s: usize) -> Vec<usize> {
        decode(s, &vec![self.backlog_levels; self.n_ues])
    }
}

fn fill_allocations(cur: &mut Vec<usize>, i: usize, left: usize, out: &mut Vec<Vec<usize>>) {
    if i + 1 == cur.len() {
        cur[i] = left;
        out.push(cur.clone());
        return;
    }
    for b in 0..=left {
        cur[i] = b;
        fill_allocations(cur, i + 1, left - b, out);
    }
}

fn decode(mut s: usize, radix: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; radix.len()];
    for i in (0..radix.len()).rev() {
        digits[i] = s % radix[i];
        s /= radix[i];
    }
    digits
}

fn encode(digits: &[usize], radix: &[usize]) -> usize {
    digits.iter().zip(radix).fold(0, |acc, (d, r)| acc * r + d)
}

/// Queue dynamics over per-user level counts `levels` (each at most the
/// spec's `backlog_levels`), rewards normalized by the full spec.
fn assemble(spec: &EnvSpec, levels: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let ns: usize = levels.iter().product();
    let allocs = spec.allocations();
    let na = allocs.len();
    let w = spec.normalized_weights();
    let norm = spec.reward_norm();
    let profiles: Vec<&[(usize, f64)]> = spec.arrival_profiles.iter().map(|p| p.outcomes()).collect();
    let mut p = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na];
    let mut after = vec![0; levels.len()];
    let mut next = vec![0; levels.len()];
    let mut pick = vec![0; levels.len()];
    for s in 0..ns {
        let backlog = decode(s, levels);
        for (a, alloc) in allocs.iter().enumerate() {
            let mut gain = 0.0;
            for i in 0..levels.len() {
                let served = backlog[i].min(alloc[i] * spec.capacity_per_block);
                gain += w[i] * served as f64;
                after[i] = backlog[i] - served;
            }
            r[s * na + a] = gain / norm;
            let row = &mut p[(s * na + a) * ns..(s * na + a + 1) * ns];
            // Odometer over the joint arrival outcomes.
            pick.fill(0);
            loop {
                let mut prob = 1.0;
                for i in 0..levels.len() {
                    let (k, q) = profiles[i][pick[i]];
                    prob *= q;
                    next[i] = (after[i] + k).min(levels[i] - 1);
                }
                row[encode(&next, levels)] += prob;
                let mut i = levels.len();
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    pick[i] += 1;
                    if pick[i] < profiles[i].len() {
                        break;
                    }
                    pick[i] = 0;
                    if i == 0 {
                        i = usize::MAX;
                        break;
                    }
                }
                if i == usize::MAX {
                    break;
                }
            }
        }
    }
    (p, r)
}

fn state_label(levels: &[usize]) -> String {
    let parts: Vec<String> = levels.iter().map(|l| format!("{l}")).collect();
    format!("q({})", parts.join(","))
}

/// The ground-truth environment described by `spec`.
pub fn build_real_env(spec: &EnvSpec) -> Result<FiniteMdp> {
    spec.check()?;
    let levels = vec![spec.backlog_levels; spec.n_ues];
    let (p, r) = assemble(spec, &levels);
    let ns = spec.n_states();
    let state_labels = (0..ns).map(|s| state_label(&decode(s, &levels))).collect();
    let action_labels = spec.allocations().iter().map(|a| state_label(a).replacen('q', "b", 1)).collect();
    FiniteMdp::new(ns, spec.n_actions(), p, r, spec.gamma)?
        .with_state_labels(state_labels)?
        .with_action_labels(action_labels)
}

/// How a candidate digital twin was derived from the real environment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum Recipe {
    /// `P = (1 - lambda) P_real + lambda * uniform`.
    Smoothing { lambda: f64 },
    /// Gaussian reward noise, clamped to `[0, 1]`.
    RewardNoise { sigma: f64 },
    /// Count estimate from uniform-random trajectories of the real env.
    Empirical { n_steps: usize, episode_length: usize, kappa: f64 },
    /// Coarser backlog quantization per user; the top kept level absorbs
    /// everything above it.
    Granularity { levels: Vec<usize> },
}

impl Recipe {
    pub fn family(&self) -> &'static str {
        match self {
            Recipe::Smoothing { .. } => "smoothing",
            Recipe::RewardNoise { .. } => "reward_noise",
            Recipe::Empirical { .. } => "empirical",
            Recipe::Granularity { .. } => "granularity",
        }
    }

    /// `key=value` pairs joined by `;`.
    pub fn params(&self) -> String {
        match self {
            Recipe::Smoothing { lambda } => format!("lambda={lambda}"),
            Recipe::RewardNoise { sigma } => format!("sigma={sigma}"),
            Recipe::Empirical { n_steps, episode_length, kappa } => {
                format!("n_steps={n_steps};episode_length={episode_length};kappa={kappa}")
            }
            Recipe::Granularity { levels } => {
                let parts: Vec<String> = levels.iter().map(|l| format!("{l}")).collect();
                format!("levels={}", parts.join("/"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDt {
    pub id: usize,
    pub mdp: FiniteMdp,
    pub recipe: Recipe,
    pub seed: u64,
}

pub const FAMILIES: [&str; 4] = ["smoothing", "reward_noise", "empirical", "granularity"];
pub const EMPIRICAL_SIZES: [usize; 4] = [100, 1_000, 10_000, 100_000];
pub const EMPIRICAL_EPISODE_LENGTH: usize = 10;
const MAX_LAMBDA: f64 = 0.8;
const MIN_LAMBDA: f64 = 0.05;
const MAX_SIGMA: f64 = 0.5;
const MIN_SIGMA: f64 = 0.02;

/// Evenly spaced grid with a leading zero: `[0, lo, ..., hi]`.
fn grid(j: usize, count: usize, lo: f64, hi: f64) -> f64 {
    match (j, count) {
        (0, _) => 0.0,
        (_, 2) => hi,
        _ => lo + (hi - lo) * (j - 1) as f64 / (count - 2) as f64,
    }
}

/// Deterministic recipe list for a pool of size `n`. Families appear in
/// [`FAMILIES`] order, each getting `n / 4` members and the first `n % 4`
/// one extra.
pub fn candidate_recipes(spec: &EnvSpec, n: usize) -> Vec<Recipe> {
    let mut out = Vec::with_capacity(n);
    let finest = spec.backlog_levels.pow(spec.n_ues as u32);
    for f in 0..FAMILIES.len() {
        let count = n / 4 + usize::from(f < n % 4);
        for j in 0..count {
            out.push(match f {
                0 => Recipe::Smoothing { lambda: grid(j, count, MIN_LAMBDA, MAX_LAMBDA) },
                1 => Recipe::RewardNoise { sigma: grid(j, count, MIN_SIGMA, MAX_SIGMA) },
                2 => Recipe::Empirical {
                    n_steps: EMPIRICAL_SIZES[j % EMPIRICAL_SIZES.len()],
                    episode_length: EMPIRICAL_EPISODE_LENGTH,
                    kappa: 0.0,
                },
                _ => {
                    // Walk level vectors from finest downwards, skipping the
                    // unquantized one.
                    let code = finest - 2 - j % (finest - 1);
                    let levels = decode(code, &vec![spec.backlog_levels; spec.n_ues]).iter().map(|d| d + 1).collect();
                    Recipe::Granularity { levels }
                }
            });
        }
    }
    out
}

/// Build the twin described by `recipe`.
pub fn realize(real: &FiniteMdp, spec: &EnvSpec, recipe: &Recipe, seed: u64) -> Result<FiniteMdp> {
    let ns = real.n_states();
    match recipe {
        Recipe::Smoothing { lambda } => {
            if !(0.0..=1.0).contains(lambda) {
                return Err(invalid("lambda must lie in [0, 1]"));
            }
            let u = lambda / ns as f64;
            let p = real.transitions().iter().map(|x| (1.0 - lambda) * x + u).collect();
            real.with_dynamics(p, real.rewards().to_vec())
        }
        Recipe::RewardNoise { sigma } => {
            if !(*sigma >= 0.0 && sigma.is_finite()) {
                return Err(invalid("sigma must be finite and nonnegative"));
            }
            let mut rng = rng_from_seed(seed);
            let r = real
                .rewards()
                .iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (x + sigma * z).clamp(0.0, 1.0)
                })
                .collect();
            real.with_dynamics(real.transitions().to_vec(), r)
        }
        Recipe::Empirical { n_steps, episode_length, kappa } => {
            let batch = sample_trajectories(real, &Behavior::UniformRandom, *n_steps, *episode_length, seed)?;
            estimate_mdp(&batch, ns, real.n_actions(), real.gamma(), *kappa)
        }
        Recipe::Granularity { levels } => {
            if levels.len() != spec.n_ues || levels.iter().any(|&l| l == 0 || l > spec.backlog_levels) {
                return Err(invalid("granularity levels must lie in [1, backlog_levels] per user"));
            }
            let full = vec![spec.backlog_levels; spec.n_ues];
            let (cp, cr) = assemble(spec, levels);
            let nc: usize = levels.iter().product();
            let na = real.n_actions();
            let lift: Vec<usize> = (0..nc).map(|c| encode(&decode(c, levels), &full)).collect();
            let mut p = vec![0.0; ns * na * ns];
            let mut r = vec![0.0; ns * na];
            for s in 0..ns {
                let coarse: Vec<usize> = decode(s, &full).iter().zip(levels).map(|(&l, &k)| l.min(k - 1)).collect();
                let c = encode(&coarse, levels);
                for a in 0..na {
                    r[s * na + a] = cr[c * na + a];
                    let src = &cp[(c * na + a) * nc..(c * na + a + 1) * nc];
                    let dst = &mut p[(s * na + a) * ns..(s * na + a + 1) * ns];
                    for (ct, &q) in src.iter().enumerate() {
                        dst[lift[ct]] += q;
                    }
                }
            }
            real.with_dynamics(p, r)
        }
    }
}

/// Candidate pool of size `n`; candidate `i` uses seed
/// `child_seed(seed, "candidate", i)`.
pub fn generate_candidates(real: &FiniteMdp, spec: &EnvSpec, n: usize, seed: u64) -> Result<Vec<CandidateDt>> {
    spec.check()?;
    if real.n_states() != spec.n_states() || real.n_actions() != spec.n_actions() {
        return Err(Error::ShapeMismatch("real environment does not match the environment spec".into()));
    }
    candidate_recipes(spec, n)
        .into_iter()
        .enumerate()
        .map(|(id, recipe)| {
            let seed = child_seed(seed, "candidate", id as u64);
            let mdp = realize(real, spec, &recipe, seed)?;
            Ok(CandidateDt { id, mdp, recipe, seed })
        })
        .collect()
}
