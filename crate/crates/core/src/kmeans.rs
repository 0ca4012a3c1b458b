//! Lloyd's K-means with k-means++ seeding.
//!
//! The fitted centroids form the structural distribution: K atoms with mass
//! 1/K each. Clustering uses the squared-Euclidean objective; distances
//! reported to callers are plain Euclidean.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CtadError, Result};
use crate::matrix::{euclidean, squared_distance, Matrix};
use crate::seed;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            seed: 0,
        }
    }
}

/// K centroids with uniform mass, plus the mean squared nearest-centroid
/// distance of the data they were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    pub k: usize,
    pub centroids: Matrix,
    pub inertia: f64,
    pub seed: u64,
}

/// Per-iteration diagnostics from [`fit_kmeans_traced`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KMeansTrace {
    /// Inertia after every assignment step, ending with the final value.
    pub inertia: Vec<f64>,
    pub iterations: usize,
    /// Number of empty clusters reseeded at a far point.
    pub repairs: usize,
    /// Distinct centroids at the end; below `k` only when the data has fewer
    /// distinct points than `k`.
    pub effective_k: usize,
}

impl CentroidSet {
    /// Wraps explicit centroids; inertia is left at zero.
    pub fn from_centroids(centroids: Matrix) -> Result<Self> {
        if centroids.is_empty() {
            return Err(CtadError::Empty("centroid set needs at least one centroid"));
        }
        Ok(Self {
            k: centroids.rows(),
            centroids,
            inertia: 0.0,
            seed: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body).map_err(|e| CtadError::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| CtadError::io(path, e))?;
        let set: CentroidSet = serde_json::from_str(&body)?;
        if set.k != set.centroids.rows() || set.k == 0 {
            return Err(CtadError::InvalidParameter(format!(
                "centroid artifact declares k={} but holds {} rows",
                set.k,
                set.centroids.rows()
            )));
        }
        Ok(set)
    }
}

/// Index and Euclidean distance of the closest centroid; ties go to the
/// lowest index.
pub fn nearest_centroid(q: &CentroidSet, x: &[f64]) -> Result<(usize, f64)> {
    if x.len() != q.dim() {
        return Err(CtadError::DimensionMismatch {
            expected: q.dim(),
            got: x.len(),
        });
    }
    let (j, d2) = nearest_sq(&q.centroids, x);
    Ok((j, d2.sqrt()))
}

/// Plain Euclidean distance to the closest centroid.
pub fn nearest_centroid_distance(q: &CentroidSet, x: &[f64]) -> Result<f64> {
    nearest_centroid(q, x).map(|(_, d)| d)
}

fn nearest_sq(centroids: &Matrix, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn fit_kmeans(train: &Matrix, params: &KMeansParams) -> Result<CentroidSet> {
    fit_kmeans_traced(train, params).map(|(c, _)| c)
}

pub fn fit_kmeans_traced(train: &Matrix, params: &KMeansParams) -> Result<(CentroidSet, KMeansTrace)> {
    let n = train.rows();
    if n == 0 {
        return Err(CtadError::Empty("K-means needs at least one training row"));
    }
    if params.k == 0 || params.k > n {
        return Err(CtadError::OutOfRange {
            what: "k",
            got: params.k,
            min: 1,
            max: n,
        });
    }
    if params.max_iter == 0 {
        return Err(CtadError::InvalidParameter("max_iter must be at least 1".into()));
    }
    if !(params.tol >= 0.0) {
        return Err(CtadError::InvalidParameter("tol must be nonnegative".into()));
    }

    let k = params.k;
    let dim = train.cols();
    let mut rng = seed::rng(params.seed);
    let mut centroids = kmeans_plus_plus(train, k, &mut rng);
    let mut assign = vec![0usize; n];
    let mut dist = vec![0.0f64; n];
    let mut trace = KMeansTrace::default();

    for iter in 0..params.max_iter {
        trace.iterations = iter + 1;
        let mut total = 0.0;
        for i in 0..n {
            let (j, d) = nearest_sq(&centroids, train.row(i));
            assign[i] = j;
            dist[i] = d;
            total += d;
        }
        trace.inertia.push(total / n as f64);

        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, v) in sums.row_mut(assign[i]).iter_mut().zip(train.row(i)) {
                *s += v;
            }
        }

        let mut next = centroids.clone();
        for j in 0..k {
            if counts[j] > 0 {
                let c = counts[j] as f64;
                for (dst, s) in next.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *dst = s / c;
                }
            }
        }
        // Empty clusters take the point currently farthest from its centroid.
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..n)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .expect("n > 0");
            if dist[far] == 0.0 {
                break;
            }
            next.row_mut(j).copy_from_slice(train.row(far));
            dist[far] = 0.0;
            trace.repairs += 1;
        }

        let shift = (0..k)
            .map(|j| euclidean(centroids.row(j), next.row(j)))
            .fold(0.0, f64::max);
        centroids = next;
        if shift < params.tol {
            break;
        }
    }

    let inertia = train.iter_rows().map(|x| nearest_sq(&centroids, x).1).sum::<f64>() / n as f64;
    trace.inertia.push(inertia);
    trace.effective_k = count_distinct(&centroids);

    Ok((
        CentroidSet {
            k,
            centroids,
            inertia,
            seed: params.seed,
        },
        trace,
    ))
}

fn kmeans_plus_plus<R: Rng>(train: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = train.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = train
        .iter_rows()
        .map(|x| squared_distance(x, train.row(chosen[0])))
        .collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // Fewer distinct points than k: duplicates are unavoidable.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        let c = train.row(next);
        for (w, x) in d2.iter_mut().zip(train.iter_rows()) {
            *w = w.min(squared_distance(x, c));
        }
    }
    train.select_rows(&chosen)
}

fn count_distinct(m: &Matrix) -> usize {
    let mut rows: Vec<Vec<u64>> = m.iter_rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    rows.sort();
    rows.dedup();
    rows.len()
}
