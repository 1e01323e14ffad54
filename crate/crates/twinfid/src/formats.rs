//! On-disk formats: MDP, metric, trajectory, ledger and pool manifest files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twinfid_core::bsm::{scalarize, PairwiseMetric, ScalarMode};
use twinfid_core::envgen::{EnvSpec, Recipe};
use twinfid_core::estimation::{TrajectoryBatch, TransitionSample};
use twinfid_core::harness::ExperimentRun;
use twinfid_core::FiniteMdp;

use crate::error::{IoError, Result};
use crate::fsio::{read_json, write_atomic, write_json};

pub const MDP_FORMAT_VERSION: u32 = 1;

/// MDP file: nested `rewards[s][a]` and `transitions[s][a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub version: u32,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub rewards: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_labels: Option<Vec<String>>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &FiniteMdp) -> Self {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        Self {
            version: MDP_FORMAT_VERSION,
            n_states: ns,
            n_actions: na,
            gamma: mdp.gamma(),
            rewards: mdp.rewards().chunks(na).map(<[f64]>::to_vec).collect(),
            transitions: (0..ns).map(|s| (0..na).map(|a| mdp.row(s, a).to_vec()).collect()).collect(),
            state_labels: mdp.state_labels().map(<[String]>::to_vec),
            action_labels: mdp.action_labels().map(<[String]>::to_vec),
        }
    }

    pub fn into_mdp(self) -> Result<FiniteMdp> {
        if self.version != MDP_FORMAT_VERSION {
            return Err(IoError::Format(format!("unsupported MDP file version {}", self.version)));
        }
        let mdp = FiniteMdp::from_nested(&self.transitions, &self.rewards, self.gamma)?;
        if (mdp.n_states(), mdp.n_actions()) != (self.n_states, self.n_actions) {
            return Err(IoError::Format(format!(
                "declared shape {}x{} does not match the arrays ({}x{})",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        let mdp = match self.state_labels {
            Some(l) => mdp.with_state_labels(l)?,
            None => mdp,
        };
        Ok(match self.action_labels {
            Some(l) => mdp.with_action_labels(l)?,
            None => mdp,
        })
    }
}

pub fn save_mdp(path: &Path, mdp: &FiniteMdp) -> Result<()> {
    write_json(path, &MdpFile::from_mdp(mdp))
}

pub fn load_mdp(path: &Path) -> Result<FiniteMdp> {
    read_json::<MdpFile>(path)?.into_mdp()
}

/// Metric file: the pairwise matrix plus scalars and convergence info.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricFile {
    pub n_real: usize,
    pub n_dt: usize,
    pub gamma: f64,
    /// Present when the state spaces coincide.
    pub scalar_max: Option<f64>,
    pub scalar_avg: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub error_bound: f64,
    pub residuals: Vec<f64>,
    pub d: Vec<Vec<f64>>,
}

impl MetricFile {
    pub fn from_metric(metric: &PairwiseMetric, weights: Option<&[f64]>) -> Result<Self> {
        let (n_real, n_dt) = metric.shape();
        let (scalar_max, scalar_avg) = if n_real == n_dt {
            let rep = scalarize(metric, ScalarMode::WorstCase, weights)?;
            (Some(rep.scalar_max), Some(rep.scalar_avg))
        } else {
            (None, None)
        };
        Ok(Self {
            n_real,
            n_dt,
            gamma: metric.gamma,
            scalar_max,
            scalar_avg,
            iterations: metric.iterations,
            residual: metric.residual,
            converged: metric.converged,
            error_bound: metric.error_bound(),
            residuals: metric.residuals.clone(),
            d: metric.rows().map(<[f64]>::to_vec).collect(),
        })
    }

    pub fn to_metric(&self) -> Result<PairwiseMetric> {
        if self.d.iter().any(|row| row.len() != self.n_dt) {
            return Err(IoError::Format("metric rows do not match n_dt".into()));
        }
        let flat = self.d.concat();
        let mut m = PairwiseMetric::from_parts(
            flat,
            self.n_real,
            self.n_dt,
            self.iterations,
            self.residual,
            self.converged,
            self.gamma,
        )?;
        m.residuals = self.residuals.clone();
        Ok(m)
    }
}

/// First line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub seed: u64,
    pub behavior: String,
}

/// JSON Lines: a header object, then one transition per line.
pub fn trajectories_to_bytes(batch: &TrajectoryBatch) -> Vec<u8> {
    let mut out = serde_json::to_vec(&TrajectoryHeader { seed: batch.seed, behavior: batch.behavior.clone() })
        .expect("header serializes");
    out.push(b'\n');
    for s in &batch.samples {
        serde_json::to_writer(&mut out, s).expect("sample serializes");
        out.push(b'\n');
    }
    out
}

pub fn save_trajectories(path: &Path, batch: &TrajectoryBatch) -> Result<()> {
    write_atomic(path, &trajectories_to_bytes(batch))
}

pub fn load_trajectories(path: &Path) -> Result<TrajectoryBatch> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let json_err = |source| IoError::Json { path: path.into(), source };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: TrajectoryHeader = serde_json::from_str(
        lines.next().ok_or_else(|| IoError::Format(format!("{}: empty trajectory file", path.display())))?,
    )
    .map_err(json_err)?;
    let samples = lines
        .map(|l| serde_json::from_str::<TransitionSample>(l).map_err(json_err))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryBatch { samples, seed: header.seed, behavior: header.behavior })
}

/// The first eight columns are the ledger's fixed schema; the trailing ones
/// carry what the reward-based selection and reports need.
pub const LEDGER_COLUMNS: [&str; 11] = [
    "candidate_id",
    "family",
    "params",
    "bsm_scalar",
    "train_subopt",
    "deploy_subopt",
    "deploy_value",
    "selected_by",
    "train_value",
    "training_effort",
    "trainer",
];

/// One ledger line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub candidate_id: usize,
    pub family: String,
    pub params: String,
    pub bsm_scalar: f64,
    pub train_subopt: f64,
    pub deploy_subopt: f64,
    pub deploy_value: f64,
    /// Strategies that picked this candidate, joined by `;`.
    pub selected_by: String,
    pub train_value: f64,
    pub training_effort: usize,
    pub trainer: String,
}

impl LedgerRow {
    pub fn from_run(run: &ExperimentRun, selected_by: &[&str], trainer: &str) -> Self {
        Self {
            candidate_id: run.candidate_id,
            family: run.family.clone(),
            params: run.params.clone(),
            bsm_scalar: run.bsm_scalar,
            train_subopt: run.train_suboptimality,
            deploy_subopt: run.deploy_suboptimality,
            deploy_value: run.deploy_value,
            selected_by: selected_by.join(";"),
            train_value: run.train_value,
            training_effort: run.training_effort,
            trainer: trainer.into(),
        }
    }

    pub fn to_run(&self) -> ExperimentRun {
        ExperimentRun {
            candidate_id: self.candidate_id,
            family: self.family.clone(),
            params: self.params.clone(),
            bsm_scalar: self.bsm_scalar,
            train_value: self.train_value,
            train_suboptimality: self.train_subopt,
            deploy_suboptimality: self.deploy_subopt,
            deploy_value: self.deploy_value,
            training_effort: self.training_effort,
        }
    }
}

pub fn ledger_to_bytes(rows: &[LedgerRow]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(LEDGER_COLUMNS).expect("in-memory CSV");
    for r in rows {
        w.serialize(r).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

pub fn save_ledger(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    write_atomic(path, &ledger_to_bytes(rows))
}

/// Check that every column in `required` is present in `headers`.
pub fn require_columns(headers: &csv::StringRecord, required: &[&str]) -> Result<()> {
    match required.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        Some(c) => Err(IoError::MissingColumn((*c).into())),
        None => Ok(()),
    }
}

pub fn load_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let csv_err = |source| IoError::Csv { path: path.into(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    require_columns(r.headers().map_err(csv_err)?, &LEDGER_COLUMNS)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Candidate entry of a pool manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolEntry {
    pub id: usize,
    pub family: String,
    pub params: String,
    pub seed: u64,
    pub recipe: Recipe,
    /// Relative to the manifest's directory.
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolManifest {
    pub seed: u64,
    pub spec: EnvSpec,
    pub real: PathBuf,
    pub candidates: Vec<PoolEntry>,
}
