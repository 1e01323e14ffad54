//! Pre-filtering experiment: train in each candidate twin, deploy in the real
//! environment, select subsets and account for costs.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bsm::{compute_dt_bsm, scalarize, BsmConfig, ScalarMode};
use crate::envgen::CandidateDt;
use crate::error::{invalid, Error, Result};
use crate::mdp::{
    accurate_policy_values, check_distribution, clamp_gap, optimal_values, q_learning, uniform_distribution,
    FiniteMdp, Policy, QLearningConfig, ValueFunction,
};
use crate::seed::{child_seed, rng_from_seed};

/// Slack allowed when checking a fitted bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Trainer {
    /// Value iteration to the configured tolerance.
    Exact,
    /// Tabular Q-learning; candidate `c` uses seed
    /// `child_seed(config.seed, "q_learning", c)`.
    QLearning(QLearningConfig),
}

impl Trainer {
    pub fn name(&self) -> &'static str {
        match self {
            Trainer::Exact => "exact",
            Trainer::QLearning(_) => "q_learning",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub trainer: Trainer,
    /// Start distribution; uniform when `None`.
    pub rho: Option<Vec<f64>>,
    pub tol: f64,
    pub bsm: BsmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { trainer: Trainer::Exact, rho: None, tol: crate::PLANNING_TOL, bsm: BsmConfig::default() }
    }
}

/// Per-candidate record of one train/deploy cycle.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentRun {
    pub candidate_id: usize,
    pub family: String,
    pub params: String,
    pub bsm_scalar: f64,
    /// rho-weighted value of the trained policy inside the candidate.
    pub train_value: f64,
    pub train_suboptimality: f64,
    pub deploy_suboptimality: f64,
    /// rho-weighted value of the trained policy in the real environment.
    pub deploy_value: f64,
    /// Planner iterations or learning episodes.
    pub training_effort: usize,
}

/// Optimal behavior of the real environment.
#[derive(Debug, Clone, PartialEq)]
pub struct RealBaseline {
    pub policy: Policy,
    pub values: ValueFunction,
    /// rho-weighted optimal value.
    pub value_rho: f64,
    pub rho: Vec<f64>,
}

/// The optimal policy's values are obtained by policy evaluation, the same
/// routine used for deployed policies, so deploying that exact policy scores
/// a gap of exactly zero.
pub fn real_baseline(real: &FiniteMdp, rho: Option<&[f64]>, tol: f64) -> Result<RealBaseline> {
    let rho = match rho {
        Some(r) => {
            check_distribution(r, real.n_states(), "rho")?;
            r.to_vec()
        }
        None => uniform_distribution(real.n_states()),
    };
    let policy = optimal_values(real, tol)?.policy;
    let values = accurate_policy_values(real, &policy, tol)?;
    let value_rho = values.weighted(&rho);
    Ok(RealBaseline { policy, values, value_rho, rho })
}

/// Worst-case mismatch of every candidate against `real`.
pub fn mismatch_scores(real: &FiniteMdp, candidates: &[CandidateDt], bsm: &BsmConfig) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|c| Ok(scalarize(&compute_dt_bsm(real, &c.mdp, bsm)?, ScalarMode::WorstCase, None)?.scalar_max))
        .collect()
}

fn train(candidate: &CandidateDt, trainer: &Trainer, tol: f64) -> Result<(Policy, usize)> {
    match trainer {
        Trainer::Exact => {
            let planned = optimal_values(&candidate.mdp, tol)?;
            Ok((planned.policy, planned.iterations))
        }
        Trainer::QLearning(cfg) => {
            let cfg = QLearningConfig { seed: child_seed(cfg.seed, "q_learning", candidate.id as u64), ..cfg.clone() };
            Ok((q_learning(&candidate.mdp, &cfg)?.policy, cfg.episodes))
        }
    }
}

/// Train inside one candidate and deploy in the real environment.
pub fn run_candidate(
    real: &FiniteMdp,
    baseline: &RealBaseline,
    candidate: &CandidateDt,
    bsm_scalar: f64,
    config: &ExperimentConfig,
) -> Result<ExperimentRun> {
    let dt = &candidate.mdp;
    if dt.n_actions() != real.n_actions() {
        return Err(Error::ActionSpaceMismatch { real: real.n_actions(), dt: dt.n_actions() });
    }
    if dt.gamma() != real.gamma() {
        return Err(Error::DiscountMismatch { real: real.gamma(), dt: dt.gamma() });
    }
    if dt.n_states() != real.n_states() {
        return Err(Error::ShapeMismatch("candidate and real state spaces differ".into()));
    }
    let tol = config.tol;
    let rho = &baseline.rho;
    let (policy, training_effort) = train(candidate, &config.trainer, tol)?;
    let dt_star = optimal_values(dt, tol)?;
    let dt_star = accurate_policy_values(dt, &dt_star.policy, tol)?.weighted(rho);
    let train_value = accurate_policy_values(dt, &policy, tol)?.weighted(rho);
    let deploy_value = accurate_policy_values(real, &policy, tol)?.weighted(rho);
    Ok(ExperimentRun {
        candidate_id: candidate.id,
        family: candidate.recipe.family().into(),
        params: candidate.recipe.params(),
        bsm_scalar,
        train_value,
        train_suboptimality: clamp_gap(dt_star - train_value, tol),
        deploy_suboptimality: clamp_gap(baseline.value_rho - deploy_value, tol),
        deploy_value,
        training_effort,
    })
}

/// Full experiment: mismatch, training and deployment for every candidate.
pub fn run_experiment(real: &FiniteMdp, candidates: &[CandidateDt], config: &ExperimentConfig) -> Result<Vec<ExperimentRun>> {
    let scores = mismatch_scores(real, candidates, &config.bsm)?;
    run_experiment_with_scores(real, candidates, &scores, config)
}

/// [`run_experiment`] with mismatch scores computed elsewhere.
pub fn run_experiment_with_scores(
    real: &FiniteMdp,
    candidates: &[CandidateDt],
    scores: &[f64],
    config: &ExperimentConfig,
) -> Result<Vec<ExperimentRun>> {
    if scores.len() != candidates.len() {
        return Err(Error::ShapeMismatch("one mismatch score per candidate required".into()));
    }
    let baseline = real_baseline(real, config.rho.as_deref(), config.tol)?;
    candidates
        .iter()
        .zip(scores)
        .map(|(c, &score)| run_candidate(real, &baseline, c, score, config))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Lowest mismatch first.
    Evaluation,
    /// Highest in-twin trained value first.
    Reward,
    /// Seeded uniform subset.
    Random(u64),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Evaluation => "evaluation",
            Strategy::Reward => "reward",
            Strategy::Random(_) => "random",
        }
    }
}

/// `max(1, floor(ratio * pool))`, robust to `ratio * pool` landing just
/// below an integer.
pub fn subset_size(pool: usize, ratio: f64) -> usize {
    ((ratio * pool as f64 + 1e-9) as usize).clamp(1, pool)
}

/// Run indices chosen by `strategy`, in ascending order. Ties go to the
/// lower candidate id.
pub fn select(runs: &[ExperimentRun], strategy: Strategy, ratio: f64) -> Result<Vec<usize>> {
    if runs.is_empty() {
        return Err(Error::EmptyPool);
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(invalid("ratio must lie in (0, 1]"));
    }
    let k = subset_size(runs.len(), ratio);
    let mut order: Vec<usize> = (0..runs.len()).collect();
    let by_id = |a: &usize, b: &usize| runs[*a].candidate_id.cmp(&runs[*b].candidate_id);
    let mut chosen: Vec<usize> = match strategy {
        Strategy::Evaluation => {
            order.sort_by(|a, b| runs[*a].bsm_scalar.total_cmp(&runs[*b].bsm_scalar).then(by_id(a, b)));
            order.truncate(k);
            order
        }
        Strategy::Reward => {
            order.sort_by(|a, b| runs[*b].train_value.total_cmp(&runs[*a].train_value).then(by_id(a, b)));
            order.truncate(k);
            order
        }
        Strategy::Random(seed) => {
            let mut rng = rng_from_seed(seed);
            rand::seq::index::sample(&mut rng, runs.len(), k).into_vec()
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostReport {
    pub pool_size: usize,
    pub n_trained: usize,
    pub n_tested: usize,
    pub training_cost_reduction: f64,
    /// Sum over tested policies of the optimal value minus the deployed value.
    pub testing_cost: f64,
    pub full_testing_cost: f64,
    pub testing_cost_reduction: f64,
    pub best_deploy_value: f64,
}

fn testing_cost<'a>(runs: impl Iterator<Item = &'a ExperimentRun>, v_star_rho: f64) -> f64 {
    runs.map(|r| v_star_rho - r.deploy_value).sum()
}

/// Costs of training and testing only `subset` (run indices) against
/// brute force over all runs.
pub fn cost_report(runs: &[ExperimentRun], subset: &[usize], v_star_rho: f64) -> Result<CostReport> {
    if runs.is_empty() {
        return Err(Error::EmptyPool);
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= runs.len()) {
        return Err(Error::IndexOutOfRange { what: "run", index: bad, bound: runs.len() });
    }
    let pool = runs.len();
    let k = subset.len();
    let full = testing_cost(runs.iter(), v_star_rho);
    let cost = testing_cost(subset.iter().map(|&i| &runs[i]), v_star_rho);
    let testing_cost_reduction = if full > 0.0 { (1.0 - cost / full).clamp(0.0, 1.0) } else { 0.0 };
    Ok(CostReport {
        pool_size: pool,
        n_trained: k,
        n_tested: k,
        training_cost_reduction: pool.saturating_sub(k) as f64 / pool as f64,
        testing_cost: cost,
        full_testing_cost: full,
        testing_cost_reduction,
        best_deploy_value: subset.iter().map(|&i| runs[i].deploy_value).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Fitted `deploy_sub <= alpha * bsm + beta * train_sub`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundFit {
    pub alpha: f64,
    pub beta: f64,
    /// Run indices used for fitting.
    pub fit_runs: Vec<usize>,
    pub holdout_runs: Vec<usize>,
    pub fit_violations: usize,
    pub holdout_violations: usize,
    pub holdout_violation_rate: f64,
}

fn violates(r: &ExperimentRun, alpha: f64, beta: f64) -> bool {
    r.deploy_suboptimality > alpha * r.bsm_scalar + beta * r.train_suboptimality + BOUND_SLACK
}

/// Smallest `alpha + beta` (both nonnegative) such that the bound holds on
/// every fit run, by enumerating vertices of the feasible region.
/// `fit` and `holdout` are indices into `runs`.
pub fn fit_bound(runs: &[ExperimentRun], fit: &[usize], holdout: &[usize]) -> Result<BoundFit> {
    for &i in fit.iter().chain(holdout) {
        if i >= runs.len() {
            return Err(Error::IndexOutOfRange { what: "run", index: i, bound: runs.len() });
        }
    }
    if fit.iter().any(|i| holdout.contains(i)) {
        return Err(invalid("fit and holdout runs must be disjoint"));
    }
    // Constraints b*alpha + t*beta >= d that can bind.
    let mut cons: Vec<(f64, f64, f64)> = Vec::new();
    for &i in fit {
        let r = &runs[i];
        if r.deploy_suboptimality <= BOUND_SLACK {
            continue;
        }
        if r.bsm_scalar <= 0.0 && r.train_suboptimality <= 0.0 {
            return Err(Error::Degenerate(i));
        }
        cons.push((r.bsm_scalar.max(0.0), r.train_suboptimality.max(0.0), r.deploy_suboptimality));
    }
    let feasible = |a: f64, b: f64| {
        a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite() && cons.iter().all(|&(x, y, d)| x * a + y * b >= d * (1.0 - 1e-12))
    };
    let mut vertices = vec![(0.0, 0.0)];
    for (i, &(x1, y1, d1)) in cons.iter().enumerate() {
        if x1 > 0.0 {
            vertices.push((d1 / x1, 0.0));
        }
        if y1 > 0.0 {
            vertices.push((0.0, d1 / y1));
        }
        for &(x2, y2, d2) in &cons[i + 1..] {
            let det = x1 * y2 - x2 * y1;
            if det != 0.0 {
                vertices.push(((d1 * y2 - d2 * y1) / det, (x1 * d2 - x2 * d1) / det));
            }
        }
    }
    let (alpha, beta) = vertices
        .into_iter()
        .filter(|&(a, b)| feasible(a, b))
        .min_by(|p, q| (p.0 + p.1).total_cmp(&(q.0 + q.1)))
        .ok_or_else(|| invalid("no feasible bound found"))?;
    let fit_violations = fit.iter().filter(|&&i| violates(&runs[i], alpha, beta)).count();
    let holdout_violations = holdout.iter().filter(|&&i| violates(&runs[i], alpha, beta)).count();
    Ok(BoundFit {
        alpha,
        beta,
        fit_runs: fit.to_vec(),
        holdout_runs: holdout.to_vec(),
        fit_violations,
        holdout_violations,
        holdout_violation_rate: if holdout.is_empty() { 0.0 } else { holdout_violations as f64 / holdout.len() as f64 },
    })
}

/// Even run indices for fitting, odd ones for holdout.
pub fn even_odd_split(n: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n).step_by(2).collect(), (1..n).step_by(2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::{build_real_env, generate_candidates, realize, EnvSpec, Recipe};

    fn run(id: usize, bsm: f64, ts: f64, ds: f64) -> ExperimentRun {
        ExperimentRun {
            candidate_id: id,
            family: "test".into(),
            params: String::new(),
            bsm_scalar: bsm,
            train_value: 0.0,
            train_suboptimality: ts,
            deploy_suboptimality: ds,
            deploy_value: 1.0 - ds,
            training_effort: 0,
        }
    }

    #[test]
    fn evaluation_selection() {
        let runs: Vec<_> = [0.1, 0.5, 0.3].iter().enumerate().map(|(i, &b)| run(i, b, 0.0, 0.0)).collect();
        assert_eq!(select(&runs, Strategy::Evaluation, 1.0 / 3.0).unwrap(), vec![0]);
        assert_eq!(select(&runs, Strategy::Evaluation, 0.67).unwrap(), vec![0, 2]);
        assert_eq!(select(&[], Strategy::Evaluation, 0.5), Err(Error::EmptyPool));
        assert!(select(&runs, Strategy::Evaluation, 0.0).is_err());
    }

    #[test]
    fn ties_prefer_lower_id() {
        let runs: Vec<_> = (0..4).map(|i| run(3 - i, 0.2, 0.0, 0.0)).collect();
        assert_eq!(select(&runs, Strategy::Evaluation, 0.25).unwrap(), vec![3]);
        assert_eq!(select(&runs, Strategy::Reward, 0.25).unwrap(), vec![3]);
    }

    #[test]
    fn sizes_and_random() {
        assert_eq!(subset_size(120, 0.05), 6);
        assert_eq!(subset_size(100, 0.29), 29);
        assert_eq!(subset_size(10, 0.01), 1);
        let runs: Vec<_> = (0..120).map(|i| run(i, 0.0, 0.0, 0.0)).collect();
        let a = select(&runs, Strategy::Random(5), 0.05).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, select(&runs, Strategy::Random(5), 0.05).unwrap());
        assert_ne!(a, select(&runs, Strategy::Random(6), 0.05).unwrap());
    }

    #[test]
    fn cost_arithmetic() {
        let runs: Vec<_> = (0..120).map(|i| run(i, 0.0, 0.0, i as f64 / 100.0)).collect();
        let rep = cost_report(&runs, &[0, 1, 2, 3, 4, 5], 1.0).unwrap();
        assert_eq!(rep.training_cost_reduction, 0.95);
        assert_eq!((rep.n_trained, rep.n_tested), (6, 6));
        assert_eq!(rep.best_deploy_value, 1.0);
        let all: Vec<usize> = (0..120).collect();
        let rep = cost_report(&runs, &all, 1.0).unwrap();
        assert_eq!(rep.training_cost_reduction, 0.0);
        assert_eq!(rep.testing_cost_reduction, 0.0);
        assert!(cost_report(&runs, &[120], 1.0).is_err());
    }

    #[test]
    fn bound_by_hand() {
        let runs = [run(0, 1.0, 0.0, 2.0), run(1, 0.0, 1.0, 0.5)];
        let fit = fit_bound(&runs, &[0, 1], &[]).unwrap();
        assert_eq!((fit.alpha, fit.beta), (2.0, 0.5));
        assert_eq!(fit.fit_violations, 0);
        let zero = fit_bound(&[run(0, 0.0, 0.0, 0.0)], &[0], &[]).unwrap();
        assert_eq!((zero.alpha, zero.beta), (0.0, 0.0));
    }

    #[test]
    fn bound_mixed_vertex() {
        // Cheapest is the intersection of both lines: alpha = beta = 1.
        let runs = [run(0, 1.0, 3.0, 4.0), run(1, 3.0, 1.0, 4.0), run(2, 0.5, 0.5, 0.1)];
        let fit = fit_bound(&runs, &[0, 1], &[2]).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-12 && (fit.beta - 1.0).abs() < 1e-12);
        assert_eq!(fit.holdout_violation_rate, 0.0);
    }

    #[test]
    fn bound_degenerate_and_holdout() {
        let runs = [run(0, 0.0, 0.0, 0.3), run(1, 1.0, 0.0, 0.1), run(2, 1.0, 0.0, 0.5)];
        assert_eq!(fit_bound(&runs, &[0], &[]), Err(Error::Degenerate(0)));
        let fit = fit_bound(&runs, &[1], &[2]).unwrap();
        assert_eq!(fit.holdout_violation_rate, 1.0);
        assert!(fit_bound(&runs, &[1], &[1]).is_err());
    }

    #[test]
    fn identical_twin_run() {
        let spec = EnvSpec::default();
        let real = build_real_env(&spec).unwrap();
        let twin = CandidateDt {
            id: 0,
            mdp: realize(&real, &spec, &Recipe::Smoothing { lambda: 0.0 }, 0).unwrap(),
            recipe: Recipe::Smoothing { lambda: 0.0 },
            seed: 0,
        };
        let config = ExperimentConfig::default();
        let runs = run_experiment(&real, &[twin], &config).unwrap();
        let r = &runs[0];
        assert!(r.bsm_scalar <= 1e-6);
        assert_eq!(r.train_suboptimality, 0.0);
        assert_eq!(r.deploy_suboptimality, 0.0);
    }

    #[test]
    fn exact_trainer_small_pool() {
        let spec = EnvSpec::default();
        let real = build_real_env(&spec).unwrap();
        let pool: Vec<_> = generate_candidates(&real, &spec, 8, 1).unwrap();
        // Skip the mismatch to keep this quick.
        let scores = vec![0.0; pool.len()];
        let config = ExperimentConfig::default();
        let runs = run_experiment_with_scores(&real, &pool, &scores, &config).unwrap();
        let base = real_baseline(&real, None, config.tol).unwrap();
        let bound = 2.0 * config.tol / (1.0 - real.gamma());
        for r in &runs {
            assert!(r.train_suboptimality <= bound);
            assert!(r.deploy_suboptimality >= -2.0 * config.tol);
            assert!((r.deploy_value + r.deploy_suboptimality - base.value_rho).abs() <= 4.0 * config.tol);
        }
    }
}
