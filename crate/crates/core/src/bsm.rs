//! Bisimulation metric between a real-environment MDP and a twin MDP.
//!
//! The metric is the fixed point of
//!
//! ```text
//! d(s, s') = max_a { |R(s,a) - R'(s',a)| + gamma * W1(P(.|s,a), P'(.|s',a); d) }
//! ```
//!
//! iterated from `d = 0`. Both MDPs must share the action index set and the
//! discount. Iterates are entrywise nondecreasing and the sup-norm change
//! contracts by `gamma` per sweep.
//!
//! Each `(s, s', a)` cell keeps its transport basis between sweeps: supports
//! never change, only the ground cost does, so the previous optimal basis is
//! a feasible warm start.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::mdp::{check_distribution, FiniteMdp};
use crate::transport::simplex::{self, SimplexBasis, SimplexScratch};
use crate::transport::sinkhorn::{self, Potentials};
use crate::transport::{SINKHORN_MAX_ITER, SINKHORN_RELATIVE_EPSILON, SINKHORN_TOL};
use crate::METRIC_TOL;

/// Sinkhorn regularization for the inner solves.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Epsilon {
    /// Fixed value in cost units.
    Absolute(f64),
    /// Fraction of the largest ground cost of each inner problem.
    Relative(f64),
}

/// Inner Wasserstein solver.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InnerSolver {
    Exact,
    Sinkhorn { epsilon: Epsilon, max_iter: usize },
}

impl InnerSolver {
    /// Sinkhorn with the default relative regularization and iteration cap.
    pub fn sinkhorn_default() -> Self {
        InnerSolver::Sinkhorn {
            epsilon: Epsilon::Relative(SINKHORN_RELATIVE_EPSILON),
            max_iter: SINKHORN_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsmConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub solver: InnerSolver,
}

impl Default for BsmConfig {
    fn default() -> Self {
        Self { tol: METRIC_TOL, max_iter: 1000, solver: InnerSolver::Exact }
    }
}

/// Pairwise metric `d[real_state][dt_state]` with convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMetric {
    d: Vec<f64>,
    n_real: usize,
    n_dt: usize,
    pub iterations: usize,
    /// Final sup-norm change between sweeps.
    pub residual: f64,
    pub converged: bool,
    pub gamma: f64,
    /// Sup-norm change of every sweep.
    pub residuals: Vec<f64>,
}

impl PairwiseMetric {
    /// Assemble from stored parts (used by file loaders).
    pub fn from_parts(
        d: Vec<f64>,
        n_real: usize,
        n_dt: usize,
        iterations: usize,
        residual: f64,
        converged: bool,
        gamma: f64,
    ) -> Result<Self> {
        if d.len() != n_real * n_dt {
            return Err(Error::ShapeMismatch(alloc::format!(
                "metric has {} entries, expected {n_real}x{n_dt}",
                d.len()
            )));
        }
        Ok(Self { d, n_real, n_dt, iterations, residual, converged, gamma, residuals: Vec::new() })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_real, self.n_dt)
    }

    pub fn get(&self, s: usize, s_dt: usize) -> f64 {
        self.d[s * self.n_dt + s_dt]
    }

    /// Row-major `[real_state][dt_state]`.
    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.d.chunks(self.n_dt)
    }

    pub fn max_entry(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// Upper bound on the distance from `self` to the true fixed point.
    pub fn error_bound(&self) -> f64 {
        self.residual * self.gamma / (1.0 - self.gamma)
    }
}

/// Largest reward gap `max_{s,s',a} |R(s,a) - R'(s',a)|`.
pub fn reward_gap_bound(real: &FiniteMdp, dt: &FiniteMdp) -> f64 {
    let mut out: f64 = 0.0;
    for a in 0..real.n_actions().min(dt.n_actions()) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..real.n_states() {
            lo = lo.min(real.reward(s, a));
            hi = hi.max(real.reward(s, a));
        }
        for s in 0..dt.n_states() {
            let r = dt.reward(s, a);
            out = out.max((hi - r).abs()).max((r - lo).abs());
        }
    }
    out
}

fn check_pair(real: &FiniteMdp, dt: &FiniteMdp) -> Result<()> {
    if real.n_actions() != dt.n_actions() {
        return Err(Error::ActionSpaceMismatch { real: real.n_actions(), dt: dt.n_actions() });
    }
    if real.gamma() != dt.gamma() {
        return Err(Error::DiscountMismatch { real: real.gamma(), dt: dt.gamma() });
    }
    Ok(())
}

/// Positive-mass supports of every `P(.|s,a)`.
struct Supports {
    offsets: Vec<usize>,
    idx: Vec<usize>,
    mass: Vec<f64>,
}

impl Supports {
    fn new(mdp: &FiniteMdp) -> Self {
        let mut offsets = vec![0];
        let mut idx = Vec::new();
        let mut mass = Vec::new();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                for (j, &p) in mdp.row(s, a).iter().enumerate() {
                    if p > 0.0 {
                        idx.push(j);
                        mass.push(p);
                    }
                }
                offsets.push(idx.len());
            }
        }
        Self { offsets, idx, mass }
    }

    #[inline]
    fn get(&self, row: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[row], self.offsets[row + 1]);
        (&self.idx[a..b], &self.mass[a..b])
    }
}

enum CellCache {
    Exact(Vec<Option<SimplexBasis>>),
    Sinkhorn(Vec<Potentials>),
}

/// Sweep operator with per-cell warm starts.
pub struct BsmSolver<'a> {
    real: &'a FiniteMdp,
    dt: &'a FiniteMdp,
    solver: InnerSolver,
    real_supp: Supports,
    dt_supp: Supports,
    cache: CellCache,
    scratch: SimplexScratch,
    cost: Vec<f64>,
    plan: Vec<f64>,
    /// Inner Sinkhorn solves that hit their iteration cap.
    pub unconverged_inner: usize,
}

impl<'a> BsmSolver<'a> {
    pub fn new(real: &'a FiniteMdp, dt: &'a FiniteMdp, solver: InnerSolver) -> Result<Self> {
        check_pair(real, dt)?;
        if let InnerSolver::Sinkhorn { epsilon: Epsilon::Absolute(e) | Epsilon::Relative(e), .. } = solver {
            if !(e > 0.0 && e.is_finite()) {
                return Err(invalid(alloc::format!("sinkhorn epsilon must be positive, got {e}")));
            }
        }
        let cells = real.n_states() * dt.n_states() * real.n_actions();
        let cache = match solver {
            InnerSolver::Exact => CellCache::Exact(vec![None; cells]),
            InnerSolver::Sinkhorn { .. } => CellCache::Sinkhorn(vec![Potentials::default(); cells]),
        };
        Ok(Self {
            real,
            dt,
            solver,
            real_supp: Supports::new(real),
            dt_supp: Supports::new(dt),
            cache,
            scratch: SimplexScratch::default(),
            cost: Vec::new(),
            plan: Vec::new(),
            unconverged_inner: 0,
        })
    }

    /// One application of the operator to `d` (row-major, real x dt).
    pub fn sweep(&mut self, d: &[f64]) -> Result<Vec<f64>> {
        let (nr, nd, na) = (self.real.n_states(), self.dt.n_states(), self.real.n_actions());
        if d.len() != nr * nd {
            return Err(Error::ShapeMismatch(alloc::format!(
                "metric has {} entries, expected {nr}x{nd}",
                d.len()
            )));
        }
        if d.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(invalid("metric entries must be finite and nonnegative"));
        }
        let gamma = self.real.gamma();
        let mut out = vec![0.0; nr * nd];
        for s in 0..nr {
            for sd in 0..nd {
                let mut best = f64::NEG_INFINITY;
                for a in 0..na {
                    let gap = (self.real.reward(s, a) - self.dt.reward(sd, a)).abs();
                    let cell = (s * nd + sd) * na + a;
                    let w = self.wasserstein(d, s * na + a, sd * na + a, cell)?;
                    best = best.max(gap + gamma * w);
                }
                out[s * nd + sd] = best;
            }
        }
        Ok(out)
    }

    fn wasserstein(&mut self, d: &[f64], real_row: usize, dt_row: usize, cell: usize) -> Result<f64> {
        let nd = self.dt.n_states();
        let (ri, rm) = self.real_supp.get(real_row);
        let (di, dm) = self.dt_supp.get(dt_row);
        if ri.len() == 1 && di.len() == 1 {
            return Ok(d[ri[0] * nd + di[0]]);
        }
        self.cost.clear();
        let mut max_cost: f64 = 0.0;
        for &i in ri {
            let row = &d[i * nd..(i + 1) * nd];
            for &j in di {
                let c = row[j];
                max_cost = max_cost.max(c);
                self.cost.push(c);
            }
        }
        if max_cost == 0.0 {
            return Ok(0.0);
        }
        match (&mut self.cache, self.solver) {
            (CellCache::Exact(bases), _) => {
                let basis = bases[cell].get_or_insert_with(|| SimplexBasis::northwest(rm, dm));
                simplex::solve(&self.cost, basis, &mut self.scratch)
            }
            (CellCache::Sinkhorn(pots), InnerSolver::Sinkhorn { epsilon, max_iter }) => {
                let eps = match epsilon {
                    Epsilon::Absolute(e) => e,
                    Epsilon::Relative(r) => r * max_cost,
                };
                let out = sinkhorn::solve(rm, dm, &self.cost, eps, max_iter, SINKHORN_TOL, &mut pots[cell], &mut self.plan);
                if !out.converged {
                    self.unconverged_inner += 1;
                }
                Ok(out.value)
            }
            (CellCache::Sinkhorn(_), InnerSolver::Exact) => unreachable!("cache matches solver"),
        }
    }
}

/// One cold application of the operator with the exact inner solver.
pub fn bsm_step(real: &FiniteMdp, dt: &FiniteMdp, d: &[f64]) -> Result<Vec<f64>> {
    BsmSolver::new(real, dt, InnerSolver::Exact)?.sweep(d)
}

/// Iterate the operator from `d = 0` until the sup-norm change is at most
/// `config.tol` or `config.max_iter` sweeps have run.
pub fn compute_dt_bsm(real: &FiniteMdp, dt: &FiniteMdp, config: &BsmConfig) -> Result<PairwiseMetric> {
    if !(config.tol > 0.0) {
        return Err(invalid("metric tolerance must be positive"));
    }
    if config.max_iter == 0 {
        return Err(invalid("metric max_iter must be at least 1"));
    }
    let mut solver = BsmSolver::new(real, dt, config.solver)?;
    let (nr, nd) = (real.n_states(), dt.n_states());
    let mut d = vec![0.0; nr * nd];
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iter {
        let next = solver.sweep(&d)?;
        let residual = next.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        d = next;
        residuals.push(residual);
        if residual <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(PairwiseMetric {
        d,
        n_real: nr,
        n_dt: nd,
        iterations: residuals.len(),
        residual: *residuals.last().unwrap_or(&0.0),
        converged,
        gamma: real.gamma(),
        residuals,
    })
}

/// Matrix-to-scalar reduction over the identity pairing `(s, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScalarMode {
    #[default]
    WorstCase,
    Average,
}

/// Scalar mismatch values of a metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchReport<'a> {
    /// `max_s d[s][s]`.
    pub scalar_max: f64,
    /// `sum_s w(s) d[s][s]`.
    pub scalar_avg: f64,
    pub weights_used: Vec<f64>,
    pub mode: ScalarMode,
    pub metric: &'a PairwiseMetric,
}

impl MismatchReport<'_> {
    /// The scalar selected by `mode`.
    pub fn value(&self) -> f64 {
        match self.mode {
            ScalarMode::WorstCase => self.scalar_max,
            ScalarMode::Average => self.scalar_avg,
        }
    }
}

/// Reduce a metric to scalars over the identity pairing. Weights default to
/// uniform.
pub fn scalarize<'a>(
    metric: &'a PairwiseMetric,
    mode: ScalarMode,
    weights: Option<&[f64]>,
) -> Result<MismatchReport<'a>> {
    let (nr, nd) = metric.shape();
    if nr != nd {
        return Err(Error::ShapeMismatch(alloc::format!(
            "identity pairing needs equal state counts, got {nr} and {nd}"
        )));
    }
    let weights_used = match weights {
        Some(w) => {
            check_distribution(w, nr, "weights")?;
            w.to_vec()
        }
        None => vec![1.0 / nr as f64; nr],
    };
    let diag = (0..nr).map(|s| metric.get(s, s));
    let scalar_max = diag.clone().fold(0.0, f64::max);
    let scalar_avg = diag.zip(&weights_used).map(|(d, w)| d * w).sum();
    Ok(MismatchReport { scalar_max, scalar_avg, weights_used, mode, metric })
}

/// Resynchronization signal: true iff `current_mismatch > threshold`.
pub fn drift_trigger(current_mismatch: f64, threshold: f64) -> bool {
    debug_assert!(current_mismatch >= 0.0 && threshold >= 0.0);
    current_mismatch > threshold
}
