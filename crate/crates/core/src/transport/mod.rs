//! Discrete Wasserstein-1 distance between two finite distributions under an
//! arbitrary nonnegative ground cost.
//!
//! [`w1_exact`] solves the transportation LP with a transportation simplex and
//! returns an optimal vertex. [`w1_sinkhorn`] returns the cost of an
//! entropically regularized plan (rounded to be exactly feasible); it is an
//! approximation whose bias can go either way relative to the exact value
//! once rounding is involved.
//!
//! Zero-mass rows and columns are removed before either solver runs.

pub(crate) mod simplex;
pub(crate) mod sinkhorn;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::PROB_TOL;

pub use sinkhorn::SinkhornOutcome;

/// Marginal tolerance for Sinkhorn convergence (L1).
pub const SINKHORN_TOL: f64 = 1e-6;
/// Default Sinkhorn iteration cap.
pub const SINKHORN_MAX_ITER: usize = 10_000;
/// Default Sinkhorn regularization as a fraction of the largest cost.
pub const SINKHORN_RELATIVE_EPSILON: f64 = 1e-3;

/// Source `p` (length `m`), target `q` (length `n`), row-major `m x n` cost.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransportProblem {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    pub cost: Vec<f64>,
}

impl TransportProblem {
    pub fn new(source: Vec<f64>, target: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        let p = Self { source, target, cost };
        p.validate()?;
        Ok(p)
    }

    pub fn from_rows(source: Vec<f64>, target: Vec<f64>, cost: &[Vec<f64>]) -> Result<Self> {
        Self::new(source, target, cost.iter().flatten().copied().collect())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.source.len(), self.target.len())
    }

    pub fn cost_at(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.target.len() + j]
    }

    pub fn max_cost(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    /// Check shapes, masses and costs.
    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.dims();
        if m == 0 || n == 0 {
            return Err(invalid("transport marginals must be nonempty"));
        }
        if self.cost.len() != m * n {
            return Err(Error::ShapeMismatch(alloc::format!(
                "cost has {} entries, expected {m}x{n}",
                self.cost.len()
            )));
        }
        if self.source.iter().chain(&self.target).any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(invalid("transport masses must be finite and nonnegative"));
        }
        if self.cost.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(invalid("transport costs must be finite and nonnegative"));
        }
        let sp: f64 = self.source.iter().sum();
        let sq: f64 = self.target.iter().sum();
        if (sp - sq).abs() > PROB_TOL {
            return Err(Error::InfeasibleMass { source_mass: sp, target_mass: sq });
        }
        if (sp - 1.0).abs() > PROB_TOL {
            return Err(invalid(alloc::format!("transport masses sum to {sp}, not 1")));
        }
        Ok(())
    }

    /// Positive-mass supports and the matching cost submatrix.
    fn pruned(&self) -> Pruned {
        let rows: Vec<usize> = (0..self.source.len()).filter(|&i| self.source[i] > 0.0).collect();
        let cols: Vec<usize> = (0..self.target.len()).filter(|&j| self.target[j] > 0.0).collect();
        let cost = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.cost_at(i, j))
            .collect();
        Pruned {
            supply: rows.iter().map(|&i| self.source[i]).collect(),
            demand: cols.iter().map(|&j| self.target[j]).collect(),
            rows,
            cols,
            cost,
        }
    }
}

struct Pruned {
    rows: Vec<usize>,
    cols: Vec<usize>,
    supply: Vec<f64>,
    demand: Vec<f64>,
    cost: Vec<f64>,
}

impl Pruned {
    fn expand(&self, sub: &[f64], m: usize, n: usize) -> Vec<f64> {
        let mut plan = vec![0.0; m * n];
        let k = self.cols.len();
        for (a, &i) in self.rows.iter().enumerate() {
            for (b, &j) in self.cols.iter().enumerate() {
                plan[i * n + j] = sub[a * k + b];
            }
        }
        plan
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SolutionStatus {
    Optimal,
    Approximate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransportSolution {
    pub value: f64,
    /// Row-major `m x n` coupling.
    pub plan: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub status: SolutionStatus,
    pub converged: bool,
    pub iterations: usize,
}

impl TransportSolution {
    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.plan[i * self.cols + j]).sum())
            .collect()
    }

    /// `sum plan * cost` recomputed against `problem`.
    pub fn plan_cost(&self, problem: &TransportProblem) -> f64 {
        self.plan.iter().zip(&problem.cost).map(|(x, c)| x * c).sum()
    }
}

/// Exact W1 via the transportation simplex.
pub fn w1_exact(problem: &TransportProblem) -> Result<TransportSolution> {
    problem.validate()?;
    let (m, n) = problem.dims();
    let pr = problem.pruned();
    let mut basis = simplex::SimplexBasis::northwest(&pr.supply, &pr.demand);
    let mut scratch = simplex::SimplexScratch::default();
    let value = simplex::solve(&pr.cost, &mut basis, &mut scratch)?;
    let plan = pr.expand(&simplex::dense_plan(&basis), m, n);
    Ok(TransportSolution {
        value,
        plan,
        rows: m,
        cols: n,
        status: SolutionStatus::Optimal,
        converged: true,
        iterations: 0,
    })
}

/// Entropic W1 approximation with regularization `epsilon` (absolute, same
/// units as the cost). Not converging within `max_iter` is reported through
/// [`TransportSolution::converged`]; the best iterate is still returned.
pub fn w1_sinkhorn(problem: &TransportProblem, epsilon: f64, max_iter: usize) -> Result<TransportSolution> {
    problem.validate()?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(alloc::format!("epsilon must be positive, got {epsilon}")));
    }
    let (m, n) = problem.dims();
    let pr = problem.pruned();
    let mut pot = sinkhorn::Potentials::default();
    let mut sub = Vec::new();
    let out = sinkhorn::solve(&pr.supply, &pr.demand, &pr.cost, epsilon, max_iter, SINKHORN_TOL, &mut pot, &mut sub);
    Ok(TransportSolution {
        value: out.value,
        plan: pr.expand(&sub, m, n),
        rows: m,
        cols: n,
        status: SolutionStatus::Approximate,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// `SINKHORN_RELATIVE_EPSILON * max cost`, or `None` when every cost is zero.
pub fn default_epsilon(problem: &TransportProblem) -> Option<f64> {
    let mc = problem.max_cost();
    (mc > 0.0).then(|| SINKHORN_RELATIVE_EPSILON * mc)
}
