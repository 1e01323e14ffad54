//! The end-to-end pre-filtering experiment and its output files.
//!
//! Seeds derive from the run seed `s` as
//! `child_seed(s, "pool", 0)` for candidate generation,
//! `child_seed(s, "q_learning", 0)` for the Q-learning trainer and
//! `child_seed(s, "random_select", 0)` for random selection.

use std::path::Path;

use serde::Serialize;
use twinfid_core::bsm::{compute_dt_bsm, scalarize, ScalarMode};
use twinfid_core::envgen::{build_real_env, generate_candidates, CandidateDt, EnvSpec};
use twinfid_core::harness::{
    cost_report, even_odd_split, fit_bound, real_baseline, run_experiment_with_scores, select, BoundFit, CostReport,
    ExperimentConfig, ExperimentRun, Strategy, Trainer,
};
use twinfid_core::mdp::QLearningConfig;
use twinfid_core::seed::child_seed;
use twinfid_core::FiniteMdp;

use crate::config::{RunConfig, StrategyName};
use crate::error::{IoError, Result};
use crate::formats::{ledger_to_bytes, LedgerRow};
use crate::fsio::{to_json_bytes, write_atomic};
use crate::plot::{bar_rows, scatter_rows, to_csv, BAR_COLUMNS, SCATTER_COLUMNS};

pub fn strategy(name: StrategyName, seed: u64) -> Strategy {
    match name {
        StrategyName::Evaluation => Strategy::Evaluation,
        StrategyName::Reward => Strategy::Reward,
        StrategyName::Random => Strategy::Random(child_seed(seed, "random_select", 0)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyCost {
    pub strategy: StrategyName,
    pub ratio: f64,
    pub candidate_ids: Vec<usize>,
    pub report: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSummary {
    pub seed: u64,
    pub v_star: f64,
    pub strategies: Vec<StrategyCost>,
    pub brute_force: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BoundOutcome {
    Fit(BoundFit),
    Failed { error: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub seed: u64,
    pub real: FiniteMdp,
    pub candidates: Vec<CandidateDt>,
    pub runs: Vec<ExperimentRun>,
    /// Q-learning runs over the same pool; empty when disabled.
    pub q_runs: Vec<ExperimentRun>,
    pub costs: CostSummary,
    /// Fit on even rows of exact runs followed by Q-learning runs, holdout on
    /// odd rows.
    pub bound: BoundOutcome,
    /// Candidates whose metric hit the iteration cap.
    pub unconverged_metrics: Vec<usize>,
}

/// Worst-case mismatch per candidate plus the ids that did not converge.
pub fn candidate_scores(real: &FiniteMdp, candidates: &[CandidateDt], cfg: &RunConfig) -> Result<(Vec<f64>, Vec<usize>)> {
    let bsm = cfg.bsm();
    let mut scores = Vec::with_capacity(candidates.len());
    let mut unconverged = Vec::new();
    for c in candidates {
        let metric = compute_dt_bsm(real, &c.mdp, &bsm)?;
        if !metric.converged {
            unconverged.push(c.id);
        }
        scores.push(scalarize(&metric, ScalarMode::WorstCase, None)?.scalar_max);
    }
    Ok((scores, unconverged))
}

pub fn run_pipeline(cfg: &RunConfig, spec: &EnvSpec, seed: u64) -> Result<ExperimentOutcome> {
    cfg.check()?;
    let real = build_real_env(spec)?;
    let candidates = generate_candidates(&real, spec, cfg.pool_size, child_seed(seed, "pool", 0))?;
    let (scores, unconverged_metrics) = candidate_scores(&real, &candidates, cfg)?;
    let exact = ExperimentConfig { trainer: Trainer::Exact, rho: None, tol: cfg.planning_tol, bsm: cfg.bsm() };
    let runs = run_experiment_with_scores(&real, &candidates, &scores, &exact)?;
    let q_runs = match cfg.q_learning {
        Some(q) => {
            let trainer =
                Trainer::QLearning(QLearningConfig::new(q.episodes, q.horizon, child_seed(seed, "q_learning", 0)));
            run_experiment_with_scores(&real, &candidates, &scores, &ExperimentConfig { trainer, ..exact.clone() })?
        }
        None => Vec::new(),
    };
    let v_star = real_baseline(&real, None, cfg.planning_tol)?.value_rho;
    let all: Vec<usize> = (0..runs.len()).collect();
    let strategies = cfg
        .strategies
        .iter()
        .map(|&name| {
            let subset = select(&runs, strategy(name, seed), cfg.ratio)?;
            Ok(StrategyCost {
                strategy: name,
                ratio: cfg.ratio,
                candidate_ids: subset.iter().map(|&i| runs[i].candidate_id).collect(),
                report: cost_report(&runs, &subset, v_star)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let costs = CostSummary { seed, v_star, strategies, brute_force: cost_report(&runs, &all, v_star)? };
    let combined: Vec<ExperimentRun> = runs.iter().chain(&q_runs).cloned().collect();
    let (fit, holdout) = even_odd_split(combined.len());
    let bound = match fit_bound(&combined, &fit, &holdout) {
        Ok(b) => BoundOutcome::Fit(b),
        Err(e) => {
            let e = IoError::from(e);
            BoundOutcome::Failed { error: e.kind().into(), message: e.to_string() }
        }
    };
    Ok(ExperimentOutcome { seed, real, candidates, runs, q_runs, costs, bound, unconverged_metrics })
}

impl ExperimentOutcome {
    /// Ledger rows of the exact-trainer runs, tagged with the strategies that
    /// selected each candidate.
    pub fn ledger(&self) -> Vec<LedgerRow> {
        self.runs
            .iter()
            .map(|r| {
                let by: Vec<&str> = self
                    .costs
                    .strategies
                    .iter()
                    .filter(|s| s.candidate_ids.contains(&r.candidate_id))
                    .map(|s| strategy(s.strategy, 0).name())
                    .collect();
                LedgerRow::from_run(r, &by, "exact")
            })
            .collect()
    }

    pub fn q_ledger(&self) -> Vec<LedgerRow> {
        self.q_runs.iter().map(|r| LedgerRow::from_run(r, &[], "q_learning")).collect()
    }

    /// Write every output file into `dir`.
    pub fn write(&self, dir: &Path, cfg: &RunConfig) -> Result<()> {
        let ledger = self.ledger();
        write_atomic(&dir.join("ledger.csv"), &ledger_to_bytes(&ledger))?;
        if !self.q_runs.is_empty() {
            write_atomic(&dir.join("ledger_q_learning.csv"), &ledger_to_bytes(&self.q_ledger()))?;
        }
        write_atomic(&dir.join("costs.json"), &to_json_bytes(&self.costs))?;
        write_atomic(&dir.join("bound.json"), &to_json_bytes(&self.bound))?;
        write_atomic(&dir.join("scatter.csv"), &to_csv(&scatter_rows(&ledger), &SCATTER_COLUMNS))?;
        let bars = bar_rows(&ledger, &cfg.bar_ratios, child_seed(self.seed, "random_select", 0))?;
        write_atomic(&dir.join("prefilter_bars.csv"), &to_csv(&bars, &BAR_COLUMNS))?;
        Ok(())
    }
}
