//! Transportation simplex on the bipartite supply/demand graph.
//!
//! A basis is a spanning tree over `m` row nodes and `n` column nodes with
//! `m + n - 1` basic cells. Only the costs vary between warm solves, so a
//! basis from a previous solve stays primal feasible and pivoting resumes
//! from it.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Basic cells and their flows.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexBasis {
    m: usize,
    n: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    flow: Vec<f64>,
}

impl SimplexBasis {
    /// Northwest-corner start. Always yields exactly `m + n - 1` cells, with
    /// explicit zero-flow cells when row and column exhaust together.
    pub fn northwest(supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let k = m + n - 1;
        let mut basis = Self {
            m,
            n,
            rows: Vec::with_capacity(k),
            cols: Vec::with_capacity(k),
            flow: Vec::with_capacity(k),
        };
        let mut a = supply[0];
        let mut b = demand[0];
        let (mut i, mut j) = (0, 0);
        loop {
            let x = if i == m - 1 && j == n - 1 { f64::max(a, 0.0) } else { f64::max(f64::min(a, b), 0.0) };
            basis.rows.push(i as u32);
            basis.cols.push(j as u32);
            basis.flow.push(x);
            if i == m - 1 && j == n - 1 {
                break;
            }
            a -= x;
            b -= x;
            if j == n - 1 || (i < m - 1 && a <= b) {
                i += 1;
                a = supply[i];
            } else {
                j += 1;
                b = demand[j];
            }
        }
        debug_assert_eq!(basis.rows.len(), k);
        basis
    }

    /// `(row, col, flow)` for every basic cell.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.flow)
            .map(|((&r, &c), &x)| (r as usize, c as usize, x))
    }

    /// `sum flow * cost` over basic cells.
    pub fn objective(&self, cost: &[f64]) -> f64 {
        self.cells().map(|(i, j, x)| x * cost[i * self.n + j]).sum()
    }
}

/// Reusable buffers for [`solve`].
#[derive(Debug, Default, Clone)]
pub struct SimplexScratch {
    u: Vec<f64>,
    v: Vec<f64>,
    head: Vec<usize>,
    next: Vec<usize>,
    depth: Vec<usize>,
    parent: Vec<usize>,
    stack: Vec<usize>,
    path_row: Vec<usize>,
    path_col: Vec<usize>,
}

impl SimplexScratch {
    fn reset(&mut self, m: usize, n: usize, edges: usize) {
        let nodes = m + n;
        self.u.clear();
        self.u.resize(m, 0.0);
        self.v.clear();
        self.v.resize(n, 0.0);
        self.head.clear();
        self.head.resize(nodes, NONE);
        self.next.clear();
        self.next.resize(2 * edges, NONE);
        self.depth.clear();
        self.depth.resize(nodes, NONE);
        self.parent.clear();
        self.parent.resize(nodes, NONE);
    }
}

/// Compute duals `u_i + v_j = c_ij` on the basis tree, plus depth and parent
/// edge of every node with row 0 as root.
fn duals(basis: &SimplexBasis, cost: &[f64], sc: &mut SimplexScratch) -> Result<()> {
    let (m, n) = (basis.m, basis.n);
    let edges = basis.rows.len();
    sc.reset(m, n, edges);
    for e in 0..edges {
        let r = basis.rows[e] as usize;
        let c = m + basis.cols[e] as usize;
        sc.next[2 * e] = sc.head[r];
        sc.head[r] = 2 * e;
        sc.next[2 * e + 1] = sc.head[c];
        sc.head[c] = 2 * e + 1;
    }
    sc.stack.clear();
    sc.stack.push(0);
    sc.depth[0] = 0;
    let mut seen = 1;
    while let Some(x) = sc.stack.pop() {
        let mut link = sc.head[x];
        while link != NONE {
            let e = link / 2;
            let r = basis.rows[e] as usize;
            let c = basis.cols[e] as usize;
            let y = if x == r { m + c } else { r };
            if sc.depth[y] == NONE {
                sc.depth[y] = sc.depth[x] + 1;
                sc.parent[y] = e;
                let cij = cost[r * n + c];
                if y >= m {
                    sc.v[c] = cij - sc.u[r];
                } else {
                    sc.u[r] = cij - sc.v[c];
                }
                sc.stack.push(y);
                seen += 1;
            }
            link = sc.next[link];
        }
    }
    if seen == m + n {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(alloc::format!(
            "transport basis does not span all {} nodes",
            m + n
        )))
    }
}

/// Optimize `basis` for `cost` (row-major `m x n`) and return the optimal
/// objective.
///
/// Entering cells use the most negative reduced cost; after a streak of
/// degenerate pivots the rule switches to Bland's (first negative cell in
/// row-major order, smallest leaving cell among ties) for the rest of the
/// solve, which rules out cycling.
pub fn solve(cost: &[f64], basis: &mut SimplexBasis, sc: &mut SimplexScratch) -> Result<f64> {
    let (m, n) = (basis.m, basis.n);
    debug_assert_eq!(cost.len(), m * n);
    let scale = cost.iter().copied().fold(0.0, f64::max);
    let eps = 1e-12 * (1.0 + scale);
    let limit = 100 * (m + n) * (m + n) + 1000;
    let mut bland = false;
    let mut degenerate_streak = 0;
    for _ in 0..limit {
        duals(basis, cost, sc)?;
        let mut enter = NONE;
        let mut best = -eps;
        'scan: for i in 0..m {
            let ui = sc.u[i];
            let row = &cost[i * n..(i + 1) * n];
            for (j, &cij) in row.iter().enumerate() {
                let r = cij - ui - sc.v[j];
                if r < best {
                    enter = i * n + j;
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        if enter == NONE {
            return Ok(basis.objective(cost));
        }
        let (ei, ej) = (enter / n, enter % n);

        // Tree path between row node ei and column node m + ej.
        sc.path_row.clear();
        sc.path_col.clear();
        let (mut x, mut y) = (ei, m + ej);
        let other = |e: usize, node: usize| {
            let r = basis.rows[e] as usize;
            if node == r {
                m + basis.cols[e] as usize
            } else {
                r
            }
        };
        while sc.depth[x] > sc.depth[y] {
            let e = sc.parent[x];
            sc.path_row.push(e | ((x < m) as usize) << 63);
            x = other(e, x);
        }
        while sc.depth[y] > sc.depth[x] {
            let e = sc.parent[y];
            sc.path_col.push(e | ((y >= m) as usize) << 63);
            y = other(e, y);
        }
        while x != y {
            let e = sc.parent[x];
            sc.path_row.push(e | ((x < m) as usize) << 63);
            x = other(e, x);
            let e = sc.parent[y];
            sc.path_col.push(e | ((y >= m) as usize) << 63);
            y = other(e, y);
        }
        // High bit set marks a "minus" edge: on the row side when the child
        // is a row node, on the column side when the child is a column node.
        const MINUS: usize = 1 << 63;
        let mut leave = NONE;
        let mut theta = f64::INFINITY;
        let mut leave_key = usize::MAX;
        for &tagged in sc.path_row.iter().chain(sc.path_col.iter()) {
            if tagged & MINUS == 0 {
                continue;
            }
            let e = tagged & !MINUS;
            let x = basis.flow[e];
            let key = basis.rows[e] as usize * n + basis.cols[e] as usize;
            if x < theta || (x == theta && key < leave_key) {
                theta = x;
                leave = e;
                leave_key = key;
            }
        }
        debug_assert!(leave != NONE);
        let theta = f64::max(theta, 0.0);
        for &tagged in sc.path_row.iter().chain(sc.path_col.iter()) {
            let e = tagged & !MINUS;
            if tagged & MINUS != 0 {
                basis.flow[e] = f64::max(basis.flow[e] - theta, 0.0);
            } else {
                basis.flow[e] += theta;
            }
        }
        basis.rows[leave] = ei as u32;
        basis.cols[leave] = ej as u32;
        basis.flow[leave] = theta;

        if theta <= 1e-15 {
            degenerate_streak += 1;
            if degenerate_streak > m + n {
                bland = true;
            }
        } else {
            degenerate_streak = 0;
        }
    }
    Err(Error::PivotLimit(limit))
}

/// Flatten a basis into a dense `m x n` plan.
pub fn dense_plan(basis: &SimplexBasis) -> Vec<f64> {
    let mut plan = vec![0.0; basis.m * basis.n];
    for (i, j, x) in basis.cells() {
        plan[i * basis.n + j] += x;
    }
    plan
}
