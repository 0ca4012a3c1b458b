//! The per-dataset stages shared by the single-step commands and the grid.

use std::path::PathBuf;

use ctad::calibrate::{CalibratorState, ReferenceSet};
use ctad::seed::derive_seed;
use ctad::theory::{self, SyntheticSpec};
use ctad::{
    fit_calibrator, load_csv, split, CalibratorConfig, CalibratorKind, CentroidSet, Dataset, LabelColumn, Matrix,
    Result, Standardizer, TrainTestSplit,
};
use serde::{Deserialize, Serialize};

/// Stage names hashed into the run seed.
pub mod stage {
    pub const SPLIT: &str = "split";
    pub const DETECTOR: &str = "detector";
    pub const CALIBRATOR: &str = "calibrator";
    pub const DATASET: &str = "dataset";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_col: LabelColumn,
    },
    /// Generated data; each run seed draws a fresh sample.
    Synthetic { name: String, spec: SyntheticSpec },
}

impl DatasetSource {
    pub fn csv(path: impl Into<PathBuf>, label_col: LabelColumn) -> Self {
        DatasetSource::Csv {
            path: path.into(),
            label_col,
        }
    }

    pub fn name(&self) -> String {
        match self {
            DatasetSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            DatasetSource::Synthetic { name, .. } => name.clone(),
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSource::Csv { path, label_col } => load_csv(path, label_col),
            DatasetSource::Synthetic { name, spec } => {
                let spec = SyntheticSpec {
                    seed: ctad::seed::derive_indexed(spec.seed, stage::DATASET, seed),
                    ..*spec
                };
                theory::generate(&spec)?.to_dataset(name)
            }
        }
    }
}

/// A split with its (optionally) standardized train and test matrices.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: TrainTestSplit,
    pub train: Matrix,
    pub test: Matrix,
}

impl Prepared {
    pub fn labels(&self) -> &[u8] {
        &self.split.test_labels
    }
}

/// Splits with the `"split"` stage seed and z-scores both halves with
/// statistics from the training half.
pub fn prepare(ds: &Dataset, seed: u64, standardize: bool) -> Result<Prepared> {
    let split = split(ds, derive_seed(seed, stage::SPLIT))?;
    let (train, test) = if standardize {
        let z = Standardizer::fit(&split.train)?;
        (z.transform(&split.train)?, z.transform(&split.test_features)?)
    } else {
        (split.train.clone(), split.test_features.clone())
    };
    Ok(Prepared { split, train, test })
}

pub fn calibrator_config(base: &CalibratorConfig, kind: CalibratorKind, seed: u64) -> CalibratorConfig {
    CalibratorConfig {
        kind,
        seed: derive_seed(seed, stage::CALIBRATOR),
        ..*base
    }
}

/// Fits the offline state, reusing cached centroids when the kind needs them.
///
/// References are drawn exactly as [`fit_calibrator`] would draw them, so a
/// cached centroid file from `fit-kmeans` with the same seed and `k`
/// reproduces the in-process result.
pub fn fit_state(train: &Matrix, cfg: &CalibratorConfig, cached: Option<CentroidSet>) -> Result<CalibratorState> {
    let Some(q) = cached else {
        return fit_calibrator(train, cfg);
    };
    cfg.validate()?;
    if q.dim() != train.cols() {
        return Err(ctad::CtadError::DimensionMismatch {
            expected: train.cols(),
            got: q.dim(),
        });
    }
    match cfg.kind {
        CalibratorKind::Ctad | CalibratorKind::OtOnly => {
            let refs = ReferenceSet::sample(train, cfg.m, derive_seed(cfg.seed, "references"))?;
            Ok(CalibratorState::from_parts(*cfg, q, refs))
        }
        CalibratorKind::CentroidDist => Ok(CalibratorState {
            config: *cfg,
            dim: train.cols(),
            centroids: Some(q),
            references: None,
            mahalanobis: None,
        }),
        CalibratorKind::Mahalanobis | CalibratorKind::None => fit_calibrator(train, cfg),
    }
}

/// Fits the centroid measure alone, as the calibrator would.
pub fn fit_centroids(train: &Matrix, k: usize, seed: u64) -> Result<CentroidSet> {
    let params = ctad::KMeansParams {
        k,
        seed: derive_seed(derive_seed(seed, stage::CALIBRATOR), "kmeans"),
        ..Default::default()
    };
    ctad::fit_kmeans(train, &params)
}
