//! Plot-ready CSV data derived from a run ledger.

use std::path::Path;

use serde::{Deserialize, Serialize};
use twinfid_core::harness::{cost_report, select, ExperimentRun, Strategy};

use crate::error::{IoError, Result};
use crate::formats::{load_ledger, require_columns, LedgerRow};

pub const SCATTER_COLUMNS: [&str; 4] = ["candidate_id", "family", "bsm_scalar", "deploy_value"];
pub const BAR_COLUMNS: [&str; 7] = [
    "strategy",
    "ratio",
    "n_selected",
    "best_deploy_value",
    "testing_cost",
    "testing_cost_reduction",
    "training_cost_reduction",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Mismatch against deployed value, one row per candidate.
    Scatter,
    /// Best deployed value and costs per strategy and ratio.
    PrefilterBars,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub candidate_id: usize,
    pub family: String,
    pub bsm_scalar: f64,
    pub deploy_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarRow {
    pub strategy: String,
    pub ratio: f64,
    pub n_selected: usize,
    pub best_deploy_value: f64,
    pub testing_cost: f64,
    pub testing_cost_reduction: f64,
    pub training_cost_reduction: f64,
}

/// The real environment's optimal rho-weighted value as recorded in a
/// ledger: each row stores `deploy_value + deploy_subopt = V*` except where
/// a tiny negative gap was clamped to zero, which only raises the sum.
pub fn ledger_v_star(runs: &[ExperimentRun]) -> f64 {
    runs.iter().map(|r| r.deploy_value + r.deploy_suboptimality).fold(f64::INFINITY, f64::min)
}

pub fn scatter_rows(rows: &[LedgerRow]) -> Vec<ScatterRow> {
    rows.iter()
        .map(|r| ScatterRow {
            candidate_id: r.candidate_id,
            family: r.family.clone(),
            bsm_scalar: r.bsm_scalar,
            deploy_value: r.deploy_value,
        })
        .collect()
}

/// One row per (strategy, ratio) plus a single brute-force row.
pub fn bar_rows(rows: &[LedgerRow], ratios: &[f64], random_seed: u64) -> Result<Vec<BarRow>> {
    let runs: Vec<ExperimentRun> = rows.iter().map(LedgerRow::to_run).collect();
    let v_star = ledger_v_star(&runs);
    let mut out = Vec::new();
    let mut push = |name: &str, ratio: f64, subset: &[usize]| -> Result<()> {
        let rep = cost_report(&runs, subset, v_star)?;
        out.push(BarRow {
            strategy: name.into(),
            ratio,
            n_selected: subset.len(),
            best_deploy_value: rep.best_deploy_value,
            testing_cost: rep.testing_cost,
            testing_cost_reduction: rep.testing_cost_reduction,
            training_cost_reduction: rep.training_cost_reduction,
        });
        Ok(())
    };
    for &ratio in ratios {
        for strategy in [Strategy::Evaluation, Strategy::Reward, Strategy::Random(random_seed)] {
            push(strategy.name(), ratio, &select(&runs, strategy, ratio)?)?;
        }
    }
    let all: Vec<usize> = (0..runs.len()).collect();
    push("brute_force", 1.0, &all)?;
    Ok(out)
}

pub(crate) fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV");
    for r in rows {
        w.serialize(r).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

/// Plot data as CSV bytes from the ledger at `ledger`. Scatter data needs
/// only its own columns; bar data needs the full ledger schema.
pub fn emit_plot_data(ledger: &Path, kind: PlotKind, ratios: &[f64], random_seed: u64) -> Result<Vec<u8>> {
    match kind {
        PlotKind::Scatter => {
            let csv_err = |source| IoError::Csv { path: ledger.into(), source };
            let mut r = csv::Reader::from_path(ledger).map_err(csv_err)?;
            require_columns(r.headers().map_err(csv_err)?, &SCATTER_COLUMNS)?;
            let rows = r.deserialize().map(|row| row.map_err(csv_err)).collect::<Result<Vec<ScatterRow>>>()?;
            Ok(to_csv(&rows, &SCATTER_COLUMNS))
        }
        PlotKind::PrefilterBars => {
            if ratios.is_empty() {
                return Err(IoError::Config("prefilter bars need at least one ratio".into()));
            }
            Ok(to_csv(&bar_rows(&load_ledger(ledger)?, ratios, random_seed)?, &BAR_COLUMNS))
        }
    }
}
