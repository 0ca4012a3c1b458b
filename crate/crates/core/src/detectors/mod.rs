//! Base anomaly detectors behind one fit/score interface.
//!
//! Higher scores mean more anomalous. Scores are raw and unnormalized.

mod ecod;
mod external;
mod iforest;
mod knn;
mod pca;

use serde::{Deserialize, Serialize};

pub use ecod::Ecod;
pub use external::ExternalScores;
pub use iforest::{average_path_length, IForest, IForestParams};
pub use knn::Knn;
pub use pca::Pca;

use crate::error::{CtadError, Result};
use crate::matrix::Matrix;

pub const DEFAULT_KNN_K: usize = 5;
pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;

/// Which detector to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorSpec {
    Knn {
        k: usize,
    },
    /// `None` uses `min(D, ceil(D/2))`, clamped to `N - 1`.
    Pca {
        components: Option<usize>,
    },
    Ecod,
    /// `subsample: None` uses `min(256, N)`.
    Iforest {
        trees: usize,
        subsample: Option<usize>,
    },
    External {
        path: String,
    },
}

impl DetectorSpec {
    pub fn knn() -> Self {
        DetectorSpec::Knn { k: DEFAULT_KNN_K }
    }

    pub fn iforest() -> Self {
        DetectorSpec::Iforest {
            trees: DEFAULT_TREES,
            subsample: None,
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            DetectorSpec::Knn { .. } => "knn".into(),
            DetectorSpec::Pca { .. } => "pca".into(),
            DetectorSpec::Ecod => "ecod".into(),
            DetectorSpec::Iforest { .. } => "iforest".into(),
            DetectorSpec::External { path } => format!("external:{path}"),
        }
    }

    /// Parses `knn`, `pca`, `ecod`, `iforest` or `external:<path>`.
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "knn" => Self::knn(),
            "pca" => DetectorSpec::Pca { components: None },
            "ecod" => DetectorSpec::Ecod,
            "iforest" => Self::iforest(),
            _ => match s.strip_prefix("external:") {
                Some(p) if !p.is_empty() => DetectorSpec::External { path: p.to_string() },
                _ => return Err(CtadError::InvalidParameter(format!("unknown detector {s:?}"))),
            },
        })
    }

    /// Fits on `train`. The seed only matters for randomized detectors.
    pub fn fit(&self, train: &Matrix, seed: u64) -> Result<DetectorModel> {
        Ok(match self {
            DetectorSpec::Knn { k } => DetectorModel::Knn(Knn::fit(train, *k)?),
            DetectorSpec::Pca { components } => {
                let r = components.unwrap_or_else(|| default_components(train));
                DetectorModel::Pca(Pca::fit(train, r)?)
            }
            DetectorSpec::Ecod => DetectorModel::Ecod(Ecod::fit(train)?),
            DetectorSpec::Iforest { trees, subsample } => {
                let params = IForestParams {
                    trees: *trees,
                    subsample: subsample.unwrap_or(DEFAULT_SUBSAMPLE.min(train.rows())),
                    seed,
                };
                DetectorModel::Iforest(IForest::fit(train, &params)?)
            }
            DetectorSpec::External { path } => DetectorModel::External(ExternalScores::load(path, train.cols())?),
        })
    }
}

fn default_components(train: &Matrix) -> usize {
    let d = train.cols();
    d.min(d.div_ceil(2)).min(train.rows().saturating_sub(1)).max(1)
}

/// A fitted detector.
#[derive(Debug, Clone)]
pub enum DetectorModel {
    Knn(Knn),
    Pca(Pca),
    Ecod(Ecod),
    Iforest(IForest),
    External(ExternalScores),
}

impl DetectorModel {
    pub fn train_dim(&self) -> usize {
        match self {
            DetectorModel::Knn(m) => m.dim(),
            DetectorModel::Pca(m) => m.dim(),
            DetectorModel::Ecod(m) => m.dim(),
            DetectorModel::Iforest(m) => m.dim(),
            DetectorModel::External(m) => m.dim(),
        }
    }

    /// Scores one sample. External models cannot score unseen points; use
    /// [`DetectorModel::score_batch`] for them.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.train_dim() {
            return Err(CtadError::DimensionMismatch {
                expected: self.train_dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            DetectorModel::Knn(m) => m.score(x),
            DetectorModel::Pca(m) => m.score(x),
            DetectorModel::Ecod(m) => m.score(x),
            DetectorModel::Iforest(m) => m.score(x),
            DetectorModel::External(_) => {
                return Err(CtadError::InvalidParameter(
                    "external scores replay a test file and cannot score single points".into(),
                ))
            }
        })
    }

    /// Scores every row of `test`, in order.
    pub fn score_batch(&self, test: &Matrix) -> Result<Vec<f64>> {
        if let DetectorModel::External(m) = self {
            return m.replay(test.rows());
        }
        test.iter_rows().map(|x| self.score(x)).collect()
    }
}
