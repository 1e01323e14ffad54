//! Log-domain Sinkhorn iterations with epsilon scaling and a final rounding
//! step onto the transport polytope.

use alloc::vec::Vec;

use crate::math::{exp, ln};

/// Result of one entropic solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOutcome {
    /// `sum plan * cost` of the rounded (exactly feasible) plan.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// L1 row-marginal violation before rounding.
    pub marginal_error: f64,
}

/// Dual potentials, reusable as a warm start for the same supports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Potentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

/// Factor between successive epsilon stages.
const SCALING_FACTOR: f64 = 0.5;
/// Iteration cap per intermediate stage.
const STAGE_ITERS: usize = 200;

#[allow(clippy::too_many_arguments)]
pub fn solve(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
    epsilon: f64,
    max_iter: usize,
    tol: f64,
    pot: &mut Potentials,
    plan: &mut Vec<f64>,
) -> SinkhornOutcome {
    let (m, n) = (supply.len(), demand.len());
    let warm = pot.f.len() == m && pot.g.len() == n;
    if !warm {
        pot.f.clear();
        pot.f.resize(m, 0.0);
        pot.g.clear();
        pot.g.resize(n, 0.0);
    }
    let log_p: Vec<f64> = supply.iter().map(|&p| ln(p)).collect();
    let log_q: Vec<f64> = demand.iter().map(|&q| ln(q)).collect();
    let max_cost = cost.iter().copied().fold(0.0, f64::max);

    let mut stages = Vec::new();
    if !warm {
        let mut e = max_cost;
        while e > epsilon {
            stages.push(e);
            e *= SCALING_FACTOR;
        }
    }
    stages.push(epsilon);

    let mut iterations = 0;
    let mut err = f64::INFINITY;
    let mut converged = false;
    let mut row_lse = alloc::vec![0.0; m];
    let last = stages.len() - 1;
    for (k, &eps) in stages.iter().enumerate() {
        let final_stage = k == last;
        let stage_tol = if final_stage { tol } else { f64::max(tol, 1e-3) };
        let mut stage_iters = 0;
        loop {
            // Row log-sums for the current (f, g); they give both the row
            // marginals and the next f.
            err = 0.0;
            for i in 0..m {
                let row = &cost[i * n..(i + 1) * n];
                let mx = row
                    .iter()
                    .zip(&pot.g)
                    .map(|(c, g)| (g - c) / eps)
                    .fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = row.iter().zip(&pot.g).map(|(c, g)| exp((g - c) / eps - mx)).sum();
                row_lse[i] = mx + ln(s);
                err += (exp(pot.f[i] / eps + row_lse[i]) - supply[i]).abs();
            }
            if err <= stage_tol && (iterations > 0 || warm) {
                if final_stage {
                    converged = true;
                }
                break;
            }
            if iterations >= max_iter || (!final_stage && stage_iters >= STAGE_ITERS) {
                break;
            }
            for i in 0..m {
                pot.f[i] = eps * (log_p[i] - row_lse[i]);
            }
            for j in 0..n {
                let mx = (0..m)
                    .map(|i| (pot.f[i] - cost[i * n + j]) / eps)
                    .fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = (0..m).map(|i| exp((pot.f[i] - cost[i * n + j]) / eps - mx)).sum();
                pot.g[j] = eps * (log_q[j] - mx - ln(s));
            }
            iterations += 1;
            stage_iters += 1;
        }
        if iterations >= max_iter && !final_stage {
            // Budget spent in the warm-up; the final stage still gets one
            // evaluation below through the plan.
            break;
        }
    }

    plan.clear();
    plan.reserve(m * n);
    for i in 0..m {
        for j in 0..n {
            plan.push(exp((pot.f[i] + pot.g[j] - cost[i * n + j]) / epsilon));
        }
    }
    round_to_polytope(plan, supply, demand);
    let value = plan.iter().zip(cost).map(|(x, c)| x * c).sum();
    SinkhornOutcome { value, iterations, converged, marginal_error: err }
}

/// Project a nonnegative matrix onto the set of couplings of `(p, q)`:
/// shrink over-full rows, then over-full columns, then add the rank-one
/// correction for the remaining deficits.
pub fn round_to_polytope(plan: &mut [f64], p: &[f64], q: &[f64]) {
    let (m, n) = (p.len(), q.len());
    for i in 0..m {
        let r: f64 = plan[i * n..(i + 1) * n].iter().sum();
        if r > p[i] && r > 0.0 {
            let x = p[i] / r;
            plan[i * n..(i + 1) * n].iter_mut().for_each(|v| *v *= x);
        }
    }
    for j in 0..n {
        let c: f64 = (0..m).map(|i| plan[i * n + j]).sum();
        if c > q[j] && c > 0.0 {
            let y = q[j] / c;
            (0..m).for_each(|i| plan[i * n + j] *= y);
        }
    }
    let err_r: Vec<f64> = (0..m)
        .map(|i| f64::max(p[i] - plan[i * n..(i + 1) * n].iter().sum::<f64>(), 0.0))
        .collect();
    let err_c: Vec<f64> = (0..n)
        .map(|j| f64::max(q[j] - (0..m).map(|i| plan[i * n + j]).sum::<f64>(), 0.0))
        .collect();
    let total: f64 = err_c.iter().sum();
    if total > 0.0 {
        for i in 0..m {
            for j in 0..n {
                plan[i * n + j] += err_r[i] * err_c[j] / total;
            }
        }
    }
}
