//! Slow reference implementations used only to check the fast paths.
//!
//! Nothing here shares code with the modules under test.

use crate::matrix::Matrix;

/// Minimum transport cost between uniform marginals by enumerating every
/// basic feasible solution of the transportation polytope.
///
/// Bases are spanning trees of the complete bipartite graph on rows and
/// columns; each tree determines its flows by peeling leaves. Masses are in
/// integer units (`cols` per row, `rows` per column). Intended for
/// `rows <= 5`, `cols <= 4`.
pub fn brute_force_transport(cost: &Matrix) -> f64 {
    let (m, n) = (cost.rows(), cost.cols());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let need = m + n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(need);
    enumerate(&cells, 0, need, &mut chosen, &mut |tree| {
        if let Some(flow) = tree_flow(m, n, tree) {
            let c: f64 = tree
                .iter()
                .zip(&flow)
                .map(|(&(i, j), &f)| f as f64 * cost.get(i, j))
                .sum::<f64>()
                / (m * n) as f64;
            best = best.min(c);
        }
    });
    best
}

fn enumerate(
    cells: &[(usize, usize)],
    start: usize,
    need: usize,
    chosen: &mut Vec<(usize, usize)>,
    visit: &mut dyn FnMut(&[(usize, usize)]),
) {
    if chosen.len() == need {
        visit(chosen);
        return;
    }
    let remaining = need - chosen.len();
    for idx in start..cells.len() {
        if cells.len() - idx < remaining {
            break;
        }
        chosen.push(cells[idx]);
        if is_forest(chosen) {
            enumerate(cells, idx + 1, need, chosen, visit);
        }
        chosen.pop();
    }
}

fn is_forest(edges: &[(usize, usize)]) -> bool {
    // Union-find: rows are nodes below 32, columns start at 32.
    let mut parent: Vec<usize> = (0..64).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        r
    }
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, 32 + j));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

/// Flows on a spanning tree, or `None` if some flow is negative.
fn tree_flow(m: usize, n: usize, tree: &[(usize, usize)]) -> Option<Vec<i64>> {
    let mut residual: Vec<i64> = (0..m).map(|_| n as i64).chain((0..n).map(|_| -(m as i64))).collect();
    let mut flow = vec![0i64; tree.len()];
    let mut done = vec![false; tree.len()];
    for _ in 0..tree.len() {
        let mut degree = vec![0usize; m + n];
        for (e, &(i, j)) in tree.iter().enumerate() {
            if !done[e] {
                degree[i] += 1;
                degree[m + j] += 1;
            }
        }
        let (e, leaf_is_row) = tree
            .iter()
            .enumerate()
            .filter(|(e, _)| !done[*e])
            .find_map(|(e, &(i, j))| {
                if degree[i] == 1 {
                    Some((e, true))
                } else if degree[m + j] == 1 {
                    Some((e, false))
                } else {
                    None
                }
            })?;
        let (i, j) = tree[e];
        let f = if leaf_is_row { residual[i] } else { -residual[m + j] };
        if f < 0 {
            return None;
        }
        flow[e] = f;
        residual[i] -= f;
        residual[m + j] += f;
        done[e] = true;
    }
    Some(flow)
}

/// AUC-ROC by counting every (positive, negative) pair; ties earn half credit.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut twice = 0u64;
    let (mut pos, mut neg) = (0u64, 0u64);
    for (a, &la) in scores.iter().zip(labels) {
        if la == 1 {
            pos += 1;
        } else {
            neg += 1;
        }
        if la != 1 {
            continue;
        }
        for (b, &lb) in scores.iter().zip(labels) {
            if lb == 0 {
                if a > b {
                    twice += 2;
                } else if a == b {
                    twice += 1;
                }
            }
        }
    }
    (twice as f64 / 2.0) / (pos * neg) as f64
}

/// `P(T > t)` for Student's t with integer `df`, by adaptive Simpson
/// integration of the density over `[0, |t|]`.
///
/// The normalising constant uses the exact half-integer gamma recurrences,
/// so no special-function library is involved.
pub fn t_upper_tail_by_quadrature(t: f64, df: u32) -> f64 {
    let nu = f64::from(df);
    let norm = gamma_half_ratio(df) / (nu * std::f64::consts::PI).sqrt();
    let density = |x: f64| norm * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let a = t.abs();
    let mass = adaptive_simpson(&density, 0.0, a, 1e-14, 60);
    if t >= 0.0 {
        0.5 - mass
    } else {
        0.5 + mass
    }
}

/// Gamma((df+1)/2) / Gamma(df/2) built from Gamma(1/2) = sqrt(pi) and Gamma(1) = 1.
fn gamma_half_ratio(df: u32) -> f64 {
    // gamma(k) for k = 1/2, 1, 3/2, 2, ... stepping by one half.
    let gamma_of_half_units = |units: u32| -> f64 {
        let (mut g, mut k) = if units % 2 == 1 {
            (std::f64::consts::PI.sqrt(), 0.5)
        } else {
            (1.0, 1.0)
        };
        while k < f64::from(units) / 2.0 {
            g *= k;
            k += 1.0;
        }
        g
    };
    gamma_of_half_units(df + 1) / gamma_of_half_units(df)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: u32) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, eps / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, eps / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, eps, depth)
}
