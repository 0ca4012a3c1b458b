//! Score calibration: `s* = s + lambda * delta`.
//!
//! The offline phase fits K-means on the training set and draws a fixed
//! reference sample once. The online phase computes, for each test point,
//! the optimal transport cost between the references-plus-test measure and
//! the centroid measure, and adds it to the base detector score. The
//! calibration terms never look at the base scores, so one fitted state
//! serves every detector.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CtadError, Result};
use crate::kmeans::{fit_kmeans, nearest_centroid_distance, CentroidSet, KMeansParams};
use crate::matrix::Matrix;
use crate::ot;
use crate::seed::{derive_seed, rng};

pub const DEFAULT_M: usize = 20;
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibratorKind {
    Ctad,
    /// Distance to the nearest centroid.
    CentroidDist,
    Mahalanobis,
    /// The transport cost alone, ignoring the base score.
    OtOnly,
    None,
}

impl CalibratorKind {
    pub const ALL: [CalibratorKind; 5] = [
        CalibratorKind::Ctad,
        CalibratorKind::CentroidDist,
        CalibratorKind::Mahalanobis,
        CalibratorKind::OtOnly,
        CalibratorKind::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CalibratorKind::Ctad => "ctad",
            CalibratorKind::CentroidDist => "centroid",
            CalibratorKind::Mahalanobis => "mahalanobis",
            CalibratorKind::OtOnly => "ot-only",
            CalibratorKind::None => "none",
        }
    }

    fn uses_centroids(self) -> bool {
        matches!(
            self,
            CalibratorKind::Ctad | CalibratorKind::OtOnly | CalibratorKind::CentroidDist
        )
    }

    fn uses_references(self) -> bool {
        matches!(self, CalibratorKind::Ctad | CalibratorKind::OtOnly)
    }
}

impl fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CalibratorKind {
    type Err = CtadError;

    fn from_str(s: &str) -> Result<Self> {
        CalibratorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CtadError::InvalidParameter(format!("unknown calibrator {s:?}")))
    }
}

/// Optional rescaling applied over a test batch before fusion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    #[default]
    None,
    /// Maps base scores and calibration terms separately onto `[0, 1]`.
    Minmax,
}

impl FromStr for Normalize {
    type Err = CtadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalize::None),
            "minmax" => Ok(Normalize::Minmax),
            _ => Err(CtadError::InvalidParameter(format!("unknown normalization {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratorConfig {
    pub kind: CalibratorKind,
    /// Reference sample size.
    pub m: usize,
    /// Number of centroids.
    pub k: usize,
    pub lambda: f64,
    pub seed: u64,
    #[serde(default)]
    pub normalize: Normalize,
}

impl Default for CalibratorConfig {
    fn default() -> Self {
        Self {
            kind: CalibratorKind::Ctad,
            m: DEFAULT_M,
            k: crate::kmeans::DEFAULT_K,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
            normalize: Normalize::None,
        }
    }
}

impl CalibratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(CtadError::InvalidParameter("k must be at least 1".into()));
        }
        if !self.lambda.is_finite() {
            return Err(CtadError::InvalidParameter("lambda must be finite".into()));
        }
        Ok(())
    }
}

/// Training rows sampled without replacement, shared by every test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub points: Matrix,
    /// Row of `train` each reference came from.
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl ReferenceSet {
    pub fn sample(train: &Matrix, m: usize, seed: u64) -> Result<Self> {
        if m > train.rows() {
            return Err(CtadError::OutOfRange {
                what: "reference sample size m",
                got: m,
                min: 0,
                max: train.rows(),
            });
        }
        let indices = index::sample(&mut rng(seed), train.rows(), m).into_vec();
        let mut points = train.select_rows(&indices);
        if m == 0 {
            points = Matrix::zeros(0, train.cols());
        }
        Ok(Self { points, indices, seed })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

/// Mean and regularized covariance factor for Mahalanobis distances.
#[derive(Debug, Clone)]
pub struct MahalanobisModel {
    pub mean: Vec<f64>,
    /// Ridge added to the covariance diagonal.
    pub ridge: f64,
    factor: Cholesky<f64, Dyn>,
}

impl MahalanobisModel {
    /// Sample covariance plus `1e-6 * trace / D` on the diagonal.
    pub fn fit(train: &Matrix) -> Result<Self> {
        let (n, d) = (train.rows(), train.cols());
        if n < 2 {
            return Err(CtadError::OutOfRange {
                what: "Mahalanobis training rows",
                got: n,
                min: 2,
                max: usize::MAX,
            });
        }
        let mean = train.column_means();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for r in train.iter_rows() {
            let z = DVector::from_iterator(d, r.iter().zip(&mean).map(|(x, m)| x - m));
            cov.ger(1.0, &z, &z, 1.0);
        }
        cov /= (n - 1) as f64;
        let trace = cov.trace();
        let ridge = if trace > 0.0 { 1e-6 * trace / d as f64 } else { 1e-12 };
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        let factor = Cholesky::new(cov)
            .ok_or_else(|| CtadError::Internal("regularized covariance is not positive definite".into()))?;
        Ok(Self { mean, ridge, factor })
    }

    /// `(x - mu)^T (Sigma + ridge I)^{-1} (x - mu)`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let z = DVector::from_iterator(self.mean.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        let y = self
            .factor
            .l_dirty()
            .solve_lower_triangular(&z)
            .expect("Cholesky factor has a nonzero diagonal");
        y.norm_squared()
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.quadratic_form(x).max(0.0).sqrt()
    }

    /// The regularized covariance, reassembled from the factor.
    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.factor.l();
        &l * l.transpose()
    }
}

/// Fitted offline state for one calibrator.
#[derive(Debug, Clone)]
pub struct CalibratorState {
    pub config: CalibratorConfig,
    pub dim: usize,
    pub centroids: Option<CentroidSet>,
    pub references: Option<ReferenceSet>,
    pub mahalanobis: Option<MahalanobisModel>,
}

/// Runs the offline phase.
///
/// K-means and reference sampling draw from independent streams derived
/// from `cfg.seed` (stages `"kmeans"` and `"references"`).
pub fn fit_calibrator(train: &Matrix, cfg: &CalibratorConfig) -> Result<CalibratorState> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(CtadError::Empty("calibrator needs training rows"));
    }
    let centroids = if cfg.kind.uses_centroids() {
        let params = KMeansParams {
            k: cfg.k,
            seed: derive_seed(cfg.seed, "kmeans"),
            ..KMeansParams::default()
        };
        Some(fit_kmeans(train, &params)?)
    } else {
        None
    };
    let references = if cfg.kind.uses_references() {
        Some(ReferenceSet::sample(train, cfg.m, derive_seed(cfg.seed, "references"))?)
    } else {
        None
    };
    let mahalanobis = if cfg.kind == CalibratorKind::Mahalanobis {
        Some(MahalanobisModel::fit(train)?)
    } else {
        None
    };
    Ok(CalibratorState {
        config: *cfg,
        dim: train.cols(),
        centroids,
        references,
        mahalanobis,
    })
}

impl CalibratorState {
    /// Builds a CTAD state from precomputed parts.
    pub fn from_parts(cfg: CalibratorConfig, centroids: CentroidSet, references: ReferenceSet) -> Self {
        Self {
            dim: centroids.dim(),
            config: cfg,
            centroids: Some(centroids),
            references: Some(references),
            mahalanobis: None,
        }
    }

    /// Calibration term for one test point; always nonnegative.
    pub fn delta(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(CtadError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        match self.config.kind {
            CalibratorKind::Ctad | CalibratorKind::OtOnly => {
                let q = self.centroids.as_ref().expect("fitted with centroids");
                let refs = self.references.as_ref().expect("fitted with references");
                ot::ot_distance(&refs.points, x, q)
            }
            CalibratorKind::CentroidDist => {
                nearest_centroid_distance(self.centroids.as_ref().expect("fitted with centroids"), x)
            }
            CalibratorKind::Mahalanobis => Ok(self.mahalanobis.as_ref().expect("fitted covariance").distance(x)),
            CalibratorKind::None => Ok(0.0),
        }
    }

    /// Calibration terms for every row, computed in parallel, in row order.
    pub fn deltas(&self, test: &Matrix) -> Result<Vec<f64>> {
        (0..test.rows())
            .into_par_iter()
            .map(|i| self.delta(test.row(i)))
            .collect()
    }

    /// The nearest-centroid bound report for one point (CTAD and OT-only).
    pub fn bounds(&self, x: &[f64]) -> Result<ot::BoundReport> {
        match (&self.centroids, &self.references) {
            (Some(q), Some(r)) => ot::bounds(&r.points, x, q),
            _ => Err(CtadError::InvalidParameter(format!(
                "{} calibrator has no transport problem",
                self.config.kind
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub base_score: f64,
    pub delta: f64,
    pub calibrated: f64,
}

/// Fuses base scores with precomputed calibration terms.
///
/// With [`Normalize::Minmax`] the stored `base_score` and `delta` are the
/// rescaled values that entered the sum.
pub fn fuse(
    kind: CalibratorKind,
    base: &[f64],
    deltas: &[f64],
    lambda: f64,
    normalize: Normalize,
) -> Result<Vec<CalibrationRecord>> {
    if base.len() != deltas.len() {
        return Err(CtadError::LengthMismatch {
            left: base.len(),
            right: deltas.len(),
        });
    }
    let (base, deltas) = match normalize {
        Normalize::None => (base.to_vec(), deltas.to_vec()),
        Normalize::Minmax => (minmax(base), minmax(deltas)),
    };
    Ok(base
        .iter()
        .zip(&deltas)
        .map(|(&s, &d)| CalibrationRecord {
            base_score: s,
            delta: d,
            calibrated: if kind == CalibratorKind::OtOnly {
                d
            } else {
                s + lambda * d
            },
        })
        .collect())
}

/// Computes calibration terms for `test` and fuses them with `base`.
pub fn calibrate_scores(
    state: &CalibratorState,
    base: &[f64],
    test: &Matrix,
    lambda: f64,
) -> Result<Vec<CalibrationRecord>> {
    if base.len() != test.rows() {
        return Err(CtadError::LengthMismatch {
            left: base.len(),
            right: test.rows(),
        });
    }
    let deltas = state.deltas(test)?;
    fuse(state.config.kind, base, &deltas, lambda, state.config.normalize)
}

fn minmax(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}
