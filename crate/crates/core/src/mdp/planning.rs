//! Exact planning and policy evaluation.

use alloc::vec;
use alloc::vec::Vec;

use super::{FiniteMdp, Policy, ValueFunction};
use crate::error::{invalid, Error, Result};
use crate::PROB_TOL;

/// Iteration cap used where the caller only supplies a tolerance.
const INNER_MAX_ITER: usize = 1_000_000;

/// Output of [`value_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct Planned {
    pub values: ValueFunction,
    /// Greedy w.r.t. `values`, lowest action index on ties.
    pub policy: Policy,
    pub iterations: usize,
    /// Final sup-norm change `||V_k - V_{k-1}||`.
    pub residual: f64,
    pub converged: bool,
    /// Sup-norm change of every sweep, in order.
    pub residuals: Vec<f64>,
}

impl Planned {
    /// `Err(NotConverged)` when the residual never reached the tolerance.
    pub fn ensure_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { iterations: self.iterations, residual: self.residual })
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(invalid(alloc::format!("tolerance must be positive, got {tol}")))
    }
}

#[inline]
fn q_value(mdp: &FiniteMdp, values: &[f64], s: usize, a: usize) -> f64 {
    let ev: f64 = mdp.row(s, a).iter().zip(values).map(|(p, v)| p * v).sum();
    mdp.reward(s, a) + mdp.gamma() * ev
}

/// Greedy policy w.r.t. `values`; ties go to the lowest action index.
pub fn greedy_policy(mdp: &FiniteMdp, values: &ValueFunction) -> Policy {
    let actions = (0..mdp.n_states())
        .map(|s| {
            let mut best = 0;
            let mut best_q = q_value(mdp, &values.0, s, 0);
            for a in 1..mdp.n_actions() {
                let q = q_value(mdp, &values.0, s, a);
                if q > best_q {
                    best = a;
                    best_q = q;
                }
            }
            best
        })
        .collect();
    Policy::Deterministic(actions)
}

/// Value iteration from `V = 0` until the sup-norm change is at most `tol`.
///
/// The returned values satisfy `||T V - V|| <= gamma * residual <= tol` when
/// converged. Not converging within `max_iter` is reported through
/// [`Planned::converged`], not as an error.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64, max_iter: usize) -> Result<Planned> {
    check_tol(tol)?;
    let ns = mdp.n_states();
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut residuals = Vec::new();
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        residual = 0.0;
        for s in 0..ns {
            let best = (0..mdp.n_actions())
                .map(|a| q_value(mdp, &v, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            residual = f64::max(residual, (best - v[s]).abs());
            next[s] = best;
        }
        core::mem::swap(&mut v, &mut next);
        iterations += 1;
        residuals.push(residual);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    let values = ValueFunction(v);
    let policy = greedy_policy(mdp, &values);
    Ok(Planned { values, policy, iterations, residual, converged, residuals })
}

/// Iterative evaluation of `policy` until `||V - T^pi V|| <= tol`.
pub fn policy_evaluation(mdp: &FiniteMdp, policy: &Policy, tol: f64) -> Result<ValueFunction> {
    check_tol(tol)?;
    policy.check(mdp)?;
    let ns = mdp.n_states();
    // Collapse the policy into R^pi and P^pi once.
    let mut r_pi = vec![0.0; ns];
    let mut p_pi = vec![0.0; ns * ns];
    for s in 0..ns {
        for a in 0..mdp.n_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * mdp.reward(s, a);
            for (dst, p) in p_pi[s * ns..(s + 1) * ns].iter_mut().zip(mdp.row(s, a)) {
                *dst += w * p;
            }
        }
    }
    let gamma = mdp.gamma();
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut residual = f64::INFINITY;
    for iter in 1..=INNER_MAX_ITER {
        residual = 0.0;
        for s in 0..ns {
            let ev: f64 = p_pi[s * ns..(s + 1) * ns].iter().zip(&v).map(|(p, x)| p * x).sum();
            let nv = r_pi[s] + gamma * ev;
            residual = f64::max(residual, (nv - v[s]).abs());
            next[s] = nv;
        }
        core::mem::swap(&mut v, &mut next);
        if residual <= tol {
            return Ok(ValueFunction(v));
        }
        if iter == INNER_MAX_ITER {
            break;
        }
    }
    Err(Error::NotConverged { iterations: INNER_MAX_ITER, residual })
}

/// Residual that bounds the distance to the fixed point by `tol`.
fn fixed_point_residual(gamma: f64, tol: f64) -> f64 {
    tol * (1.0 - gamma) / gamma
}

/// Optimal values accurate to `tol` in sup norm.
pub fn optimal_values(mdp: &FiniteMdp, tol: f64) -> Result<Planned> {
    let planned = value_iteration(mdp, fixed_point_residual(mdp.gamma(), tol), INNER_MAX_ITER)?;
    planned.ensure_converged()?;
    Ok(planned)
}

/// Policy values accurate to `tol` in sup norm.
pub fn accurate_policy_values(mdp: &FiniteMdp, policy: &Policy, tol: f64) -> Result<ValueFunction> {
    policy_evaluation(mdp, policy, fixed_point_residual(mdp.gamma(), tol))
}

/// Uniform distribution over `n` states.
pub fn uniform_distribution(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub(crate) fn check_distribution(rho: &[f64], n: usize, what: &str) -> Result<()> {
    if rho.len() != n {
        return Err(Error::ShapeMismatch(alloc::format!(
            "{what} has {} entries, expected {n}",
            rho.len()
        )));
    }
    let sum: f64 = rho.iter().sum();
    if rho.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROB_TOL {
        return Err(invalid(alloc::format!("{what} is not a probability distribution")));
    }
    Ok(())
}

/// `sum_s rho(s) (V*(s) - V^pi(s))`.
///
/// Both value functions are computed to within `tol` of their fixed points,
/// so a negative gap no larger than `2 tol` is pure rounding and is clamped
/// to zero.
pub fn suboptimality(mdp: &FiniteMdp, policy: &Policy, rho: &[f64], tol: f64) -> Result<f64> {
    check_tol(tol)?;
    check_distribution(rho, mdp.n_states(), "rho")?;
    let v_star = optimal_values(mdp, tol)?.values.weighted(rho);
    let v_pi = accurate_policy_values(mdp, policy, tol)?.weighted(rho);
    Ok(clamp_gap(v_star - v_pi, tol))
}

pub(crate) fn clamp_gap(gap: f64, tol: f64) -> f64 {
    if gap < 0.0 && gap >= -2.0 * tol {
        0.0
    } else {
        gap
    }
}
