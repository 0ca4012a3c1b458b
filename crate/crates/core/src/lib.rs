//! Optimal-transport calibration for tabular anomaly detectors.
//!
//! A base detector produces a score `s` for each test point. The calibrator
//! adds `lambda * delta`, where `delta` is the exact transport cost between
//! two views of the normal data: a small random sample of training points
//! with the test point appended, and the K-means centroids of the training
//! set. Points that do not fit the normal structure force expensive
//! transport and receive a larger correction.
//!
//! Modules follow the pipeline: [`dataset`] loads and splits data,
//! [`kmeans`] builds the centroid measure, [`ot`] solves the transport
//! problem, [`detectors`] supplies base scores, [`calibrate`] fuses them,
//! [`metrics`] evaluates, and [`theory`] checks the gap guarantees on
//! synthetic data.

pub mod calibrate;
pub mod dataset;
pub mod detectors;
pub mod error;
pub mod kmeans;
pub mod matrix;
pub mod metrics;
pub mod ot;
pub mod seed;
pub mod stats;
pub mod theory;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use calibrate::{
    calibrate_scores, fit_calibrator, CalibrationRecord, CalibratorConfig, CalibratorKind, CalibratorState, Normalize,
    ReferenceSet,
};
pub use dataset::{load_csv, split, Dataset, LabelColumn, Standardizer, TrainTestSplit};
pub use detectors::{DetectorModel, DetectorSpec};
pub use error::{CtadError, Result};
pub use kmeans::{fit_kmeans, nearest_centroid, CentroidSet, KMeansParams};
pub use matrix::Matrix;
pub use metrics::{
    auc_pr, auc_roc, evaluate, gap_report, paired_t_test_one_tailed, EvalResult, GapReport, PairedTestResult,
};
pub use ot::{bounds, build_cost, ot_distance, solve_ot, BoundReport, CostMatrix, TransportPlan};
