//! Empirical checks of the transport-gap guarantees on synthetic data.
//!
//! Normals are isotropic Gaussians around `k` well-separated centers; the
//! cluster spread sets how close normals sit to the centroids. Anomalies sit
//! at a fixed radius from their nearest center, which sets how far they are
//! from every centroid.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibrate::ReferenceSet;
use crate::dataset::Dataset;
use crate::error::{CtadError, Result};
use crate::kmeans::{fit_kmeans, CentroidSet, KMeansParams};
use crate::matrix::{euclidean, Matrix};
use crate::ot;
use crate::seed::{derive_indexed, derive_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub k_clusters: usize,
    pub cluster_std: f64,
    pub anomaly_offset: f64,
    pub n_train: usize,
    pub n_test_normal: usize,
    pub n_test_anomaly: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Three tight clusters in four dimensions with far anomalies.
    fn default() -> Self {
        Self {
            k_clusters: 3,
            cluster_std: 0.05,
            anomaly_offset: 5.0,
            n_train: 300,
            n_test_normal: 100,
            n_test_anomaly: 30,
            dim: 4,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CtadError::InvalidParameter(m.to_string()));
        if self.k_clusters == 0 || self.dim == 0 {
            return bad("k_clusters and dim must be positive");
        }
        if !(self.cluster_std >= 0.0) || !self.cluster_std.is_finite() {
            return bad("cluster_std must be finite and nonnegative");
        }
        if !(self.anomaly_offset > 0.0) || !(self.anomaly_offset > self.cluster_std) {
            return bad("anomaly_offset must be positive and exceed cluster_std");
        }
        if self.n_train == 0 {
            return bad("n_train must be positive");
        }
        Ok(())
    }

    /// Pairwise distance between cluster centers.
    pub fn center_separation(&self) -> f64 {
        if self.cluster_std > 0.0 {
            10.0 * self.cluster_std
        } else {
            1.0
        }
    }
}

/// Generated train/test data with the centers it was drawn around.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub centers: Matrix,
    pub train: Matrix,
    pub test: Matrix,
    pub test_labels: Vec<u8>,
}

impl SyntheticSet {
    /// All rows as one labeled dataset (train normals, test normals, anomalies).
    pub fn to_dataset(&self, name: &str) -> Result<Dataset> {
        let features = self.train.vstack(&self.test)?;
        let labels = std::iter::repeat_n(0, self.train.rows())
            .chain(self.test_labels.iter().copied())
            .collect();
        Dataset::new(name, features, labels)
    }
}

/// Draws a synthetic set; deterministic for a given spec (including seed).
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticSet> {
    spec.validate()?;
    let mut r = rng(derive_seed(spec.seed, "synthetic"));
    let centers = layout_centers(spec, &mut r);
    let normal = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        let c = centers.row(r.random_range(0..spec.k_clusters));
        c.iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(r);
                v + spec.cluster_std * z
            })
            .collect()
    };

    let train_rows: Vec<Vec<f64>> = (0..spec.n_train).map(|_| normal(&mut r)).collect();
    let mut test_rows: Vec<Vec<f64>> = (0..spec.n_test_normal).map(|_| normal(&mut r)).collect();
    for _ in 0..spec.n_test_anomaly {
        test_rows.push(anomaly(spec, &centers, &mut r));
    }
    let labels = std::iter::repeat_n(0u8, spec.n_test_normal)
        .chain(std::iter::repeat_n(1u8, spec.n_test_anomaly))
        .collect();
    let dim = spec.dim;
    let to_matrix = |rows: &[Vec<f64>]| {
        if rows.is_empty() {
            Ok(Matrix::zeros(0, dim))
        } else {
            Matrix::from_rows(rows)
        }
    };
    Ok(SyntheticSet {
        train: to_matrix(&train_rows)?,
        test: to_matrix(&test_rows)?,
        test_labels: labels,
        centers,
    })
}

/// Scaled simplex vertices when `k <= dim`, otherwise rejection-sampled
/// points in a cube, always at least the separation apart.
fn layout_centers<R: Rng>(spec: &SyntheticSpec, r: &mut R) -> Matrix {
    let sep = spec.center_separation();
    let (k, d) = (spec.k_clusters, spec.dim);
    let mut centers = Matrix::zeros(k, d);
    if k <= d {
        for i in 0..k {
            centers.set(i, i, sep / std::f64::consts::SQRT_2);
        }
        return centers;
    }
    let side = sep * k as f64;
    let mut placed: Vec<Vec<f64>> = Vec::with_capacity(k);
    while placed.len() < k {
        let p: Vec<f64> = (0..d).map(|_| r.random_range(0.0..side)).collect();
        if placed.iter().all(|q| euclidean(q, &p) >= sep) {
            placed.push(p);
        }
    }
    for (i, p) in placed.iter().enumerate() {
        centers.row_mut(i).copy_from_slice(p);
    }
    centers
}

fn anomaly<R: Rng>(spec: &SyntheticSpec, centers: &Matrix, r: &mut R) -> Vec<f64> {
    let mut last = Vec::new();
    for _ in 0..1000 {
        let c = r.random_range(0..spec.k_clusters);
        let mut u: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(r)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        u.iter_mut().for_each(|v| *v *= spec.anomaly_offset / norm);
        let p: Vec<f64> = centers.row(c).iter().zip(&u).map(|(a, b)| a + b).collect();
        // Keep only points whose nearest center is the one they orbit.
        if centers
            .iter_rows()
            .all(|q| euclidean(q, &p) >= spec.anomaly_offset * (1.0 - 1e-12))
        {
            return p;
        }
        last = p;
    }
    last
}

/// Outcome of one gap check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCheck {
    pub mean_ot_normal: f64,
    pub mean_ot_anomaly: f64,
    /// `mean_ot_anomaly - mean_ot_normal`.
    pub empirical_gap: f64,
    /// Standard error of the gap estimate.
    pub gap_se: f64,
    /// `(eta_hat - (M+1) eps_hat) / (M+1)`.
    pub predicted_floor: f64,
    /// `empirical_gap >= predicted_floor - 3 gap_se`.
    pub holds: bool,
    /// Mean nearest-centroid distance of the test normals.
    pub eps_hat: f64,
    /// Mean nearest-centroid distance of the anomalies.
    pub eta_hat: f64,
    pub m: usize,
    pub k: usize,
    /// Test points whose transport cost exceeded `(sum d_i + d*)/(M+1)`.
    pub nearest_assignment_exceedances: usize,
}

/// Fits K-means and a reference sample on the synthetic training set, then
/// compares class-conditional transport costs on its test set.
pub fn check_gap(spec: &SyntheticSpec, m: usize, k_centroids: usize, seed: u64) -> Result<GapCheck> {
    let data = generate(spec)?;
    if data.test_labels.iter().all(|&l| l == 1) || data.test_labels.iter().all(|&l| l == 0) {
        return Err(CtadError::SingleClass {
            positives: spec.n_test_anomaly,
            negatives: spec.n_test_normal,
        });
    }
    let q = fit_kmeans(
        &data.train,
        &KMeansParams {
            k: k_centroids,
            seed: derive_seed(seed, "kmeans"),
            ..KMeansParams::default()
        },
    )?;
    let refs = ReferenceSet::sample(&data.train, m, derive_seed(seed, "references"))?;

    let mut ot_by_class = [Vec::new(), Vec::new()];
    let mut near_by_class = [Vec::new(), Vec::new()];
    let mut up_exceed = 0;
    for (x, &label) in data.test.iter_rows().zip(&data.test_labels) {
        // Errors if the cost ever drops below d*/(M+1).
        let b = ot::bounds(&refs.points, x, &q)?;
        if !b.upper_holds() {
            up_exceed += 1;
        }
        ot_by_class[label as usize].push(b.ot);
        near_by_class[label as usize].push(b.nearest_dist);
    }
    let (mn, vn) = mean_var(&ot_by_class[0]);
    let (ma, va) = mean_var(&ot_by_class[1]);
    let gap = ma - mn;
    let se = (vn / ot_by_class[0].len() as f64 + va / ot_by_class[1].len() as f64).sqrt();
    let eps_hat = mean_var(&near_by_class[0]).0;
    let eta_hat = mean_var(&near_by_class[1]).0;
    let m1 = (m + 1) as f64;
    let floor = (eta_hat - m1 * eps_hat) / m1;
    Ok(GapCheck {
        mean_ot_normal: mn,
        mean_ot_anomaly: ma,
        empirical_gap: gap,
        gap_se: se,
        predicted_floor: floor,
        holds: gap >= floor - 3.0 * se,
        eps_hat,
        eta_hat,
        m,
        k: k_centroids,
        nearest_assignment_exceedances: up_exceed,
    })
}

/// Sample mean and unbiased variance (variance 0 for fewer than two values).
fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub m: usize,
    pub mean_delta: f64,
    pub var_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub rows: Vec<VarianceRow>,
    /// Least-squares slope of `ln Var` against `ln M`.
    pub log_log_slope: f64,
    pub trials: usize,
    /// The fixed normal test point every trial is scored on.
    pub probe: Vec<f64>,
}

impl VarianceTable {
    /// True when no step raises the variance by more than `noise` (relative).
    pub fn non_increasing(&self, noise: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].var_delta <= w[0].var_delta * (1.0 + noise))
    }
}

/// Variance of the calibration term for one held-out normal point as the
/// reference sample is redrawn `trials` times for each `M`.
pub fn check_variance(
    spec: &SyntheticSpec,
    m_values: &[usize],
    k_centroids: usize,
    trials: usize,
) -> Result<VarianceTable> {
    if trials < 30 {
        return Err(CtadError::OutOfRange {
            what: "trials",
            got: trials,
            min: 30,
            max: usize::MAX,
        });
    }
    if m_values.is_empty() {
        return Err(CtadError::Empty("variance check needs at least one M"));
    }
    let data = generate(spec)?;
    let probe = data
        .test
        .iter_rows()
        .zip(&data.test_labels)
        .find(|(_, &l)| l == 0)
        .map(|(x, _)| x.to_vec())
        .ok_or(CtadError::Empty("variance check needs a normal test point"))?;
    let q: CentroidSet = fit_kmeans(
        &data.train,
        &KMeansParams {
            k: k_centroids,
            seed: derive_seed(spec.seed, "kmeans"),
            ..KMeansParams::default()
        },
    )?;

    let mut rows = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let deltas: Vec<f64> = (0..trials)
            .map(|t| {
                let s = derive_indexed(spec.seed, &format!("variance-m{m}"), t as u64);
                let refs = ReferenceSet::sample(&data.train, m, s)?;
                ot::ot_distance(&refs.points, &probe, &q)
            })
            .collect::<Result<_>>()?;
        let (mean, var) = mean_var(&deltas);
        rows.push(VarianceRow {
            m,
            mean_delta: mean,
            var_delta: var,
        });
    }
    let log_log_slope = slope(
        &rows.iter().map(|r| (r.m as f64).ln()).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.var_delta.ln()).collect::<Vec<_>>(),
    );
    Ok(VarianceTable {
        rows,
        log_log_slope,
        trials,
        probe,
    })
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
