//! Exact discrete optimal transport between uniform measures.
//!
//! The source measure puts mass `1/(M+1)` on each of the `M` reference points
//! and on the test point (last row); the target measure puts `1/K` on each
//! centroid. Costs are plain Euclidean distances.
//!
//! The solver is the transportation-problem form of network simplex. Masses
//! are scaled to integers (each source supplies `K` units, each centroid
//! receives `M+1` units, `K(M+1)` units in total), so every basic solution is
//! integral and the ratio test is exact; only costs and potentials are
//! floating point.

use serde::{Deserialize, Serialize};

use crate::error::{CtadError, Result};
use crate::kmeans::CentroidSet;
use crate::matrix::{euclidean, Matrix};

/// Slack for optimality, marginals and bound checks.
pub const SOLVER_TOL: f64 = 1e-9;

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 64;
const MAX_PIVOTS: usize = 1_000_000;

/// `(M+1) x K` ground costs; the last row belongs to the test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub entries: Matrix,
}

impl CostMatrix {
    /// Validates that every entry is finite and nonnegative.
    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.rows() == 0 || entries.cols() == 0 {
            return Err(CtadError::Empty("cost matrix needs at least one row and column"));
        }
        for i in 0..entries.rows() {
            for (j, &c) in entries.row(i).iter().enumerate() {
                if !c.is_finite() || c < 0.0 {
                    return Err(CtadError::InvalidParameter(format!(
                        "cost[{i}][{j}] = {c} is not a finite nonnegative number"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn source_count(&self) -> usize {
        self.entries.rows()
    }

    pub fn target_count(&self) -> usize {
        self.entries.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub mass: Matrix,
    pub cost: f64,
    /// Number of simplex pivots taken after the initial basis.
    pub pivots: usize,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.iter_rows().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.mass.cols()];
        for r in self.mass.iter_rows() {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }
}

/// Euclidean costs from each reference row and then `x_test` to each centroid.
pub fn build_cost(refs: &Matrix, x_test: &[f64], q: &CentroidSet) -> Result<CostMatrix> {
    let dim = q.dim();
    if x_test.len() != dim {
        return Err(CtadError::DimensionMismatch {
            expected: dim,
            got: x_test.len(),
        });
    }
    if refs.rows() > 0 && refs.cols() != dim {
        return Err(CtadError::DimensionMismatch {
            expected: dim,
            got: refs.cols(),
        });
    }
    let k = q.centroids.rows();
    let mut entries = Matrix::zeros(refs.rows() + 1, k);
    let sources = refs.iter_rows().chain(std::iter::once(x_test));
    for (i, x) in sources.enumerate() {
        for (j, c) in q.centroids.iter_rows().enumerate() {
            entries.set(i, j, euclidean(x, c));
        }
    }
    CostMatrix::new(entries)
}

/// Transportation-simplex state over an `m x n` grid of cells.
struct Simplex<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    flow: Vec<i64>,
    basic: Vec<bool>,
    // Scratch buffers reused across pivots.
    adj: Vec<Vec<(usize, usize)>>,
    parent: Vec<Option<(usize, usize)>>,
    queue: Vec<usize>,
}

impl<'a> Simplex<'a> {
    /// Northwest-corner start; always yields exactly `m + n - 1` basic cells.
    fn northwest(m: usize, n: usize, cost: &'a [f64]) -> Self {
        let mut flow = vec![0i64; m * n];
        let mut basic = vec![false; m * n];
        let mut supply = vec![n as i64; m];
        let mut demand = vec![m as i64; n];
        let (mut i, mut j) = (0, 0);
        loop {
            let x = supply[i].min(demand[j]);
            flow[i * n + j] = x;
            basic[i * n + j] = true;
            supply[i] -= x;
            demand[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if supply[i] == 0 && i < m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            m,
            n,
            cost,
            flow,
            basic,
            adj: vec![Vec::new(); m + n],
            parent: vec![None; m + n],
            queue: Vec::with_capacity(m + n),
        }
    }

    fn rebuild_adjacency(&mut self) {
        for a in &mut self.adj {
            a.clear();
        }
        for cell in (0..self.m * self.n).filter(|&c| self.basic[c]) {
            let (i, j) = (cell / self.n, cell % self.n);
            self.adj[i].push((self.m + j, cell));
            self.adj[self.m + j].push((i, cell));
        }
    }

    /// Breadth-first search over the basis tree from `root`, filling `parent`.
    fn search(&mut self, root: usize) {
        self.parent.iter_mut().for_each(|p| *p = None);
        self.queue.clear();
        self.queue.push(root);
        let mut seen = vec![false; self.m + self.n];
        seen[root] = true;
        let mut head = 0;
        while head < self.queue.len() {
            let u = self.queue[head];
            head += 1;
            for &(v, cell) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    self.parent[v] = Some((u, cell));
                    self.queue.push(v);
                }
            }
        }
    }

    /// Dual potentials with `u[0] = 0` and `u_i + v_j = c_ij` on basic cells.
    fn potentials(&mut self) -> (Vec<f64>, Vec<f64>) {
        self.search(0);
        let mut pot = vec![0.0; self.m + self.n];
        for idx in 1..self.queue.len() {
            let v = self.queue[idx];
            let (u, cell) = self.parent[v].expect("basis tree is spanning");
            pot[v] = self.cost[cell] - pot[u];
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    fn entering(&self, u: &[f64], v: &[f64], tol: f64, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for cell in 0..self.m * self.n {
            if self.basic[cell] {
                continue;
            }
            let (i, j) = (cell / self.n, cell % self.n);
            let r = self.cost[cell] - u[i] - v[j];
            if r < -tol {
                if bland {
                    return Some(cell);
                }
                if best.is_none_or(|(_, b)| r < b) {
                    best = Some((cell, r));
                }
            }
        }
        best.map(|(c, _)| c)
    }

    /// Pivots `enter` into the basis; returns the step length in units.
    fn pivot(&mut self, enter: usize) -> i64 {
        let (i, j) = (enter / self.n, enter % self.n);
        // Tree path from column node j back to row node i, alternating -,+,-...
        self.search(i);
        let mut minus = Vec::new();
        let mut plus = Vec::new();
        let mut node = self.m + j;
        let mut sign_minus = true;
        while node != i {
            let (prev, cell) = self.parent[node].expect("entering cell closes a cycle");
            if sign_minus {
                minus.push(cell);
            } else {
                plus.push(cell);
            }
            sign_minus = !sign_minus;
            node = prev;
        }
        let theta = minus
            .iter()
            .map(|&c| self.flow[c])
            .min()
            .expect("cycle has a minus cell");
        let leave = minus
            .iter()
            .copied()
            .filter(|&c| self.flow[c] == theta)
            .min()
            .expect("some minus cell attains theta");

        self.flow[enter] += theta;
        for &c in &plus {
            self.flow[c] += theta;
        }
        for &c in &minus {
            self.flow[c] -= theta;
        }
        self.basic[enter] = true;
        self.basic[leave] = false;
        theta
    }
}

/// Minimum-cost coupling between uniform row and column marginals.
pub fn solve_ot(c: &CostMatrix) -> Result<TransportPlan> {
    let m = c.source_count();
    let n = c.target_count();
    let cost = c.entries.as_slice();
    let scale = cost.iter().fold(1.0f64, |a, &b| a.max(b));
    let tol = 1e-12 * scale;

    let mut sx = Simplex::northwest(m, n, cost);
    let mut pivots = 0;
    let mut degenerate_run = 0;
    let mut bland = false;
    loop {
        sx.rebuild_adjacency();
        let (u, v) = sx.potentials();
        let Some(enter) = sx.entering(&u, &v, tol, bland) else {
            break;
        };
        let theta = sx.pivot(enter);
        pivots += 1;
        if theta == 0 {
            degenerate_run += 1;
            if degenerate_run > DEGENERATE_LIMIT {
                bland = true;
            }
        } else {
            degenerate_run = 0;
        }
        if pivots > MAX_PIVOTS {
            return Err(CtadError::Internal(format!(
                "transport simplex did not converge on a {m}x{n} instance"
            )));
        }
    }

    let units = (m * n) as f64;
    let mut mass = Matrix::zeros(m, n);
    let mut total = 0.0;
    for cell in 0..m * n {
        if sx.flow[cell] != 0 {
            let w = sx.flow[cell] as f64 / units;
            mass.set(cell / n, cell % n, w);
            total += w * cost[cell];
        }
    }
    Ok(TransportPlan {
        mass,
        cost: total,
        pivots,
    })
}

/// Optimal transport cost between the references-plus-test measure and the
/// centroid measure.
pub fn ot_distance(refs: &Matrix, x_test: &[f64], q: &CentroidSet) -> Result<f64> {
    solve_ot(&build_cost(refs, x_test, q)?).map(|p| p.cost)
}

/// The optimal cost next to the nearest-centroid quantities that bracket it.
///
/// `lower` is `d*/(M+1)`, which every feasible plan must pay for the test
/// row alone. `upper` is `(sum d_i + d*)/(M+1)`, the cost of sending every
/// source to its nearest centroid. That assignment ignores the centroid
/// marginals, so `upper` is reached only when it happens to give each
/// centroid exactly `1/K`; otherwise it sits below `ot` (see
/// [`BoundReport::upper_holds`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub ot: f64,
    pub lower: f64,
    pub upper: f64,
    pub nearest_dist: f64,
    pub ref_dists: Vec<f64>,
}

impl BoundReport {
    pub fn lower_holds(&self) -> bool {
        self.ot >= self.lower - SOLVER_TOL
    }

    /// Whether `ot <= upper` within [`SOLVER_TOL`].
    pub fn upper_holds(&self) -> bool {
        self.ot <= self.upper + SOLVER_TOL
    }

    /// Mean nearest-centroid distance of the references (0 when `M = 0`).
    pub fn mean_ref_dist(&self) -> f64 {
        if self.ref_dists.is_empty() {
            0.0
        } else {
            self.ref_dists.iter().sum::<f64>() / self.ref_dists.len() as f64
        }
    }
}

/// Solves the instance and reports it against the nearest-centroid bounds.
///
/// Fails with [`CtadError::Internal`] if the optimum falls below either
/// nearest-centroid quantity: both are costs of relaxations of the transport
/// problem, so a solver result under them would be infeasible.
pub fn bounds(refs: &Matrix, x_test: &[f64], q: &CentroidSet) -> Result<BoundReport> {
    let cost = build_cost(refs, x_test, q)?;
    let plan = solve_ot(&cost)?;
    let m1 = cost.source_count();
    let row_min = |i: usize| cost.entries.row(i).iter().copied().fold(f64::INFINITY, f64::min);
    let ref_dists: Vec<f64> = (0..m1 - 1).map(row_min).collect();
    let nearest_dist = row_min(m1 - 1);
    let report = BoundReport {
        ot: plan.cost,
        lower: nearest_dist / m1 as f64,
        upper: (ref_dists.iter().sum::<f64>() + nearest_dist) / m1 as f64,
        nearest_dist,
        ref_dists,
    };
    if !report.lower_holds() || report.ot < report.upper - SOLVER_TOL {
        return Err(CtadError::Internal(format!(
            "transport cost {} below a relaxation bound (lower {}, nearest-assignment {})",
            report.ot, report.lower, report.upper
        )));
    }
    Ok(report)
}
