//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use twinfid_core::{FiniteMdp, Policy};

/// Random MDP with full-support transition rows and rewards in `[0, 1]`.
pub fn random_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, gamma: f64) -> FiniteMdp {
    let mut p = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        let row: Vec<f64> = (0..ns).map(|_| rng.random::<f64>() + 0.01).collect();
        let total: f64 = row.iter().sum();
        p.extend(row.iter().map(|x| x / total));
    }
    let r = (0..ns * na).map(|_| rng.random::<f64>()).collect();
    FiniteMdp::new(ns, na, p, r, gamma).unwrap()
}

/// `k` masses in multiples of 1/6 summing to 1 (zeros allowed).
pub fn random_sixths<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut units = vec![0u32; k];
    for _ in 0..6 {
        units[rng.random_range(0..k)] += 1;
    }
    units.into_iter().map(|u| u as f64 / 6.0).collect()
}

/// Random MDP whose transition rows are multiples of 1/6.
pub fn random_sixths_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, gamma: f64) -> FiniteMdp {
    let p = (0..ns * na).flat_map(|_| random_sixths(rng, ns)).collect();
    let r = (0..ns * na).map(|_| rng.random::<f64>()).collect();
    FiniteMdp::new(ns, na, p, r, gamma).unwrap()
}

fn atoms(masses: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, m) in masses.iter().enumerate() {
        let units = (m * 6.0).round() as usize;
        out.extend(std::iter::repeat_n(i, units));
    }
    assert_eq!(out.len(), 6, "masses must be multiples of 1/6 summing to 1");
    out
}

/// All permutations of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// W1 between sixth-valued distributions by trying every assignment of the
/// six unit atoms. `cost` is row-major `p.len() x q.len()`.
pub fn brute_w1(p: &[f64], q: &[f64], cost: &[f64], perms: &[Vec<usize>]) -> f64 {
    let (a, b) = (atoms(p), atoms(q));
    let m = q.len();
    perms
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| cost[a[i] * m + b[j]]).sum::<f64>() / 6.0)
        .fold(f64::INFINITY, f64::min)
}

/// Exact policy values from `(I - gamma P_pi) V = R_pi`.
pub fn exact_policy_values(mdp: &FiniteMdp, policy: &Policy) -> Vec<f64> {
    let n = mdp.n_states();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        for act in 0..mdp.n_actions() {
            let w = policy.prob(s, act);
            if w == 0.0 {
                continue;
            }
            b[s] += w * mdp.reward(s, act);
            for (t, p) in mdp.row(s, act).iter().enumerate() {
                a[(s, t)] -= mdp.gamma() * w * p;
            }
        }
    }
    a.lu().solve(&b).expect("I - gamma P is nonsingular").iter().copied().collect()
}

/// Every deterministic policy of `mdp`.
pub fn all_deterministic_policies(mdp: &FiniteMdp) -> Vec<Policy> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let total = na.pow(ns as u32);
    (0..total)
        .map(|mut code| {
            let mut actions = vec![0; ns];
            for a in actions.iter_mut() {
                *a = code % na;
                code /= na;
            }
            Policy::Deterministic(actions)
        })
        .collect()
}
