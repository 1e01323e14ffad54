//! Experiment run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twinfid_core::bsm::{BsmConfig, InnerSolver};
use twinfid_core::envgen::EnvSpec;

use crate::error::{IoError, Result};
use crate::fsio::read_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    Exact,
    Sinkhorn,
}

impl SolverName {
    pub fn inner(self) -> InnerSolver {
        match self {
            SolverName::Exact => InnerSolver::Exact,
            SolverName::Sinkhorn => InnerSolver::sinkhorn_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Evaluation,
    Reward,
    Random,
}

/// Low-budget Q-learning runs added next to the exact-trainer runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QLearningRuns {
    pub episodes: usize,
    pub horizon: usize,
}

impl Default for QLearningRuns {
    fn default() -> Self {
        Self { episodes: 200, horizon: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Environment spec file; the built-in default environment when absent.
    pub env_spec: Option<PathBuf>,
    pub pool_size: usize,
    pub ratio: f64,
    /// Ratios reported in the pre-filtering bar data.
    pub bar_ratios: Vec<f64>,
    pub strategies: Vec<StrategyName>,
    pub seeds: Vec<u64>,
    pub planning_tol: f64,
    pub metric_tol: f64,
    pub metric_max_iter: usize,
    pub solver: SolverName,
    pub q_learning: Option<QLearningRuns>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env_spec: None,
            pool_size: 120,
            ratio: 0.05,
            bar_ratios: vec![0.05, 0.1, 0.25],
            strategies: vec![StrategyName::Evaluation, StrategyName::Reward, StrategyName::Random],
            seeds: vec![0],
            planning_tol: twinfid_core::PLANNING_TOL,
            metric_tol: twinfid_core::METRIC_TOL,
            metric_max_iter: 1000,
            solver: SolverName::Exact,
            q_learning: Some(QLearningRuns::default()),
            out: None,
        }
    }
}

impl RunConfig {
    /// Load a config; a relative `env_spec` is resolved against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        if let (Some(spec), Some(dir)) = (&cfg.env_spec, path.parent()) {
            if spec.is_relative() {
                cfg.env_spec = Some(dir.join(spec));
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(IoError::Config("pool_size must be at least 1".into()));
        }
        for &r in std::iter::once(&self.ratio).chain(&self.bar_ratios) {
            if !(r > 0.0 && r <= 1.0) {
                return Err(IoError::Config(format!("ratio {r} is outside (0, 1]")));
            }
        }
        if !(self.planning_tol > 0.0 && self.metric_tol > 0.0) {
            return Err(IoError::Config("tolerances must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(IoError::Config("at least one seed is required".into()));
        }
        Ok(())
    }

    pub fn bsm(&self) -> BsmConfig {
        BsmConfig { tol: self.metric_tol, max_iter: self.metric_max_iter, solver: self.solver.inner() }
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        match &self.env_spec {
            Some(p) => read_json(p),
            None => Ok(EnvSpec::default()),
        }
    }
}
