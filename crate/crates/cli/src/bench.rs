//! Benchmark grid over datasets, detectors, calibrators, seeds and fusion
//! weights.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use ctad::calibrate::{fuse, CalibratorKind};
use ctad::seed::derive_seed;
use ctad::{
    evaluate, gap_report, paired_t_test_one_tailed, CalibratorConfig, CtadError, DetectorSpec, EvalResult, GapReport,
    PairedTestResult,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{self, stage, DatasetSource, Prepared};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub datasets: Vec<DatasetSource>,
    pub detectors: Vec<DetectorSpec>,
    pub calibrators: Vec<CalibratorKind>,
    /// Shared `m`, `k`, default `lambda` and normalization; `kind` and
    /// `seed` are set per cell.
    pub calibrator: CalibratorConfig,
    /// Fusion weights to evaluate. Empty means `[calibrator.lambda]`.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

impl BenchConfig {
    pub fn validate(&self) -> ctad::Result<()> {
        let need = |ok: bool, what: &'static str| if ok { Ok(()) } else { Err(CtadError::Empty(what)) };
        need(!self.datasets.is_empty(), "bench needs at least one dataset")?;
        need(!self.detectors.is_empty(), "bench needs at least one detector")?;
        need(!self.calibrators.is_empty(), "bench needs at least one calibrator")?;
        need(!self.seeds.is_empty(), "bench needs at least one seed")?;
        self.calibrator.validate()?;
        if let Some(l) = self.lambdas.iter().find(|l| !l.is_finite()) {
            return Err(CtadError::InvalidParameter(format!("lambda {l} is not finite")));
        }
        Ok(())
    }

    pub fn resolved_lambdas(&self) -> Vec<f64> {
        if self.lambdas.is_empty() {
            vec![self.calibrator.lambda]
        } else {
            self.lambdas.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl DeltaSummary {
    fn of(v: &[f64]) -> Self {
        Self {
            mean: v.iter().sum::<f64>() / v.len().max(1) as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub baseline: EvalResult,
    pub calibrated: EvalResult,
    pub delta: DeltaSummary,
    /// Class means of the raw calibration term.
    pub gap: GapReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Ok(CellMetrics),
    Failed { stage: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub detector: String,
    pub calibrator: CalibratorKind,
    pub seed: u64,
    pub lambda: f64,
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn metrics(&self) -> Option<&CellMetrics> {
        match &self.outcome {
            CellOutcome::Ok(m) => Some(m),
            CellOutcome::Failed { .. } => None,
        }
    }
}

/// Wall-clock costs for one (dataset, detector, calibrator, seed) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub dataset: String,
    pub detector: String,
    pub calibrator: CalibratorKind,
    pub seed: u64,
    pub detector_fit_ms: f64,
    pub calibrator_fit_ms: f64,
    pub base_ms_per_sample: f64,
    pub calibration_ms_per_sample: f64,
}

/// Dataset-level means over seeds, one row per (dataset, detector,
/// calibrator, lambda).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset: String,
    pub detector: String,
    pub calibrator: CalibratorKind,
    pub lambda: f64,
    pub n_seeds: usize,
    pub base_auc_roc: f64,
    pub cal_auc_roc: f64,
    pub base_auc_pr: f64,
    pub cal_auc_pr: f64,
    pub mean_delta_normal: f64,
    pub mean_delta_anomaly: f64,
}

/// Cross-dataset aggregate for one (detector, calibrator, lambda).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub detector: String,
    pub calibrator: CalibratorKind,
    pub lambda: f64,
    pub n_datasets: usize,
    pub base_auc_roc: f64,
    pub cal_auc_roc: f64,
    pub improv_auc_roc: f64,
    pub wins_auc_roc: usize,
    pub base_auc_pr: f64,
    pub cal_auc_pr: f64,
    pub improv_auc_pr: f64,
    pub wins_auc_pr: usize,
    /// Datasets where the anomaly class has the larger mean calibration term.
    pub gap_positive: usize,
    pub test_auc_roc: Option<PairedTestResult>,
    pub test_auc_pr: Option<PairedTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub cells: Vec<CellResult>,
    pub datasets: Vec<DatasetRow>,
    pub summary: Vec<SummaryRow>,
    pub timings: Vec<TimingRow>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.metrics().is_none()).count()
    }

    /// Everything except wall-clock timings; identical for identical configs.
    pub fn body_json(&self) -> serde_json::Result<String> {
        #[derive(Serialize)]
        struct Body<'a> {
            config: &'a BenchConfig,
            cells: &'a [CellResult],
            datasets: &'a [DatasetRow],
            summary: &'a [SummaryRow],
        }
        serde_json::to_string_pretty(&Body {
            config: &self.config,
            cells: &self.cells,
            datasets: &self.datasets,
            summary: &self.summary,
        })
    }
}

struct GroupOutput {
    cells: Vec<CellResult>,
    timings: Vec<TimingRow>,
}

/// Runs every grid cell. Per-cell failures are recorded, not returned.
///
/// Work is split into (dataset, seed, detector) groups that run on a pool
/// of `cfg.jobs` threads; results are merged in grid order.
pub fn run_bench(cfg: &BenchConfig) -> anyhow::Result<BenchReport> {
    cfg.validate().context("invalid bench config")?;
    let lambdas = cfg.resolved_lambdas();
    let groups: Vec<(usize, u64, usize)> = (0..cfg.datasets.len())
        .flat_map(|d| {
            cfg.seeds
                .iter()
                .flat_map(move |&s| (0..cfg.detectors.len()).map(move |t| (d, s, t)))
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("building worker pool")?;
    let outputs: Vec<GroupOutput> = pool.install(|| {
        groups
            .par_iter()
            .map(|&(d, seed, t)| run_group(cfg, &cfg.datasets[d], seed, &cfg.detectors[t], &lambdas))
            .collect()
    });

    let mut cells = Vec::new();
    let mut timings = Vec::new();
    for g in outputs {
        cells.extend(g.cells);
        timings.extend(g.timings);
    }
    let datasets = dataset_rows(&cells);
    let summary = summary_rows(&datasets)?;
    Ok(BenchReport {
        config: cfg.clone(),
        cells,
        datasets,
        summary,
        timings,
    })
}

fn run_group(cfg: &BenchConfig, source: &DatasetSource, seed: u64, det: &DetectorSpec, lambdas: &[f64]) -> GroupOutput {
    let dataset = source.name();
    let detector = det.label();
    let mut out = GroupOutput {
        cells: Vec::new(),
        timings: Vec::new(),
    };
    let fail_all = |out: &mut GroupOutput, kinds: &[CalibratorKind], stage: &str, err: String| {
        for &kind in kinds {
            for &lambda in lambdas {
                out.cells.push(CellResult {
                    dataset: dataset.clone(),
                    detector: detector.clone(),
                    calibrator: kind,
                    seed,
                    lambda,
                    outcome: CellOutcome::Failed {
                        stage: stage.to_string(),
                        error: err.clone(),
                    },
                });
            }
        }
    };

    let prepared = match source
        .load(seed)
        .and_then(|ds| pipeline::prepare(&ds, seed, cfg.standardize))
    {
        Ok(p) => p,
        Err(e) => {
            fail_all(&mut out, &cfg.calibrators, "data", e.to_string());
            return out;
        }
    };
    let n_test = prepared.test.rows().max(1) as f64;

    let t0 = Instant::now();
    let base = det
        .fit(&prepared.train, derive_seed(seed, stage::DETECTOR))
        .and_then(|model| {
            let fit_ms = ms(t0);
            let t1 = Instant::now();
            model.score_batch(&prepared.test).map(|s| (s, fit_ms, ms(t1)))
        });
    let (base, detector_fit_ms, base_ms) = match base {
        Ok(b) => b,
        Err(e) => {
            fail_all(&mut out, &cfg.calibrators, "detector", e.to_string());
            return out;
        }
    };

    for &kind in &cfg.calibrators {
        match calibration_terms(cfg, kind, seed, &prepared) {
            Ok((deltas, fit_ms, delta_ms)) => {
                out.timings.push(TimingRow {
                    dataset: dataset.clone(),
                    detector: detector.clone(),
                    calibrator: kind,
                    seed,
                    detector_fit_ms,
                    calibrator_fit_ms: fit_ms,
                    base_ms_per_sample: base_ms / n_test,
                    calibration_ms_per_sample: delta_ms / n_test,
                });
                for &lambda in lambdas {
                    let outcome = match score_cell(cfg, kind, lambda, &base, &deltas, prepared.labels()) {
                        Ok(m) => CellOutcome::Ok(m),
                        Err(e) => CellOutcome::Failed {
                            stage: "evaluate".into(),
                            error: e.to_string(),
                        },
                    };
                    out.cells.push(CellResult {
                        dataset: dataset.clone(),
                        detector: detector.clone(),
                        calibrator: kind,
                        seed,
                        lambda,
                        outcome,
                    });
                }
            }
            Err(e) => fail_all(&mut out, &[kind], "calibrator", e.to_string()),
        }
    }
    out
}

/// Raw calibration terms for the test rows, scored one at a time so the
/// per-sample time is not shared with other rows.
fn calibration_terms(
    cfg: &BenchConfig,
    kind: CalibratorKind,
    seed: u64,
    p: &Prepared,
) -> ctad::Result<(Vec<f64>, f64, f64)> {
    let c = pipeline::calibrator_config(&cfg.calibrator, kind, seed);
    let t0 = Instant::now();
    let state = pipeline::fit_state(&p.train, &c, None)?;
    let fit_ms = ms(t0);
    let t1 = Instant::now();
    let deltas = p
        .test
        .iter_rows()
        .map(|x| state.delta(x))
        .collect::<ctad::Result<Vec<_>>>()?;
    Ok((deltas, fit_ms, ms(t1)))
}

fn score_cell(
    cfg: &BenchConfig,
    kind: CalibratorKind,
    lambda: f64,
    base: &[f64],
    deltas: &[f64],
    labels: &[u8],
) -> ctad::Result<CellMetrics> {
    let records = fuse(kind, base, deltas, lambda, cfg.calibrator.normalize)?;
    let calibrated: Vec<f64> = records.iter().map(|r| r.calibrated).collect();
    Ok(CellMetrics {
        baseline: evaluate(base, labels)?,
        calibrated: evaluate(&calibrated, labels)?,
        delta: DeltaSummary::of(deltas),
        gap: gap_report(deltas, labels)?,
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

type GroupKey = (String, String, CalibratorKind, u64);

fn lambda_key(l: f64) -> u64 {
    l.to_bits()
}

fn dataset_rows(cells: &[CellResult]) -> Vec<DatasetRow> {
    // Keyed by (dataset, detector, calibrator, lambda bits), first-seen order kept.
    let mut order: Vec<GroupKey> = Vec::new();
    let mut acc: HashMap<GroupKey, (f64, Vec<&CellMetrics>)> = HashMap::new();
    for c in cells {
        let key = (
            c.dataset.clone(),
            c.detector.clone(),
            c.calibrator,
            lambda_key(c.lambda),
        );
        let entry = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (c.lambda, Vec::new())
        });
        if let Some(m) = c.metrics() {
            entry.1.push(m);
        }
    }
    order
        .into_iter()
        .filter_map(|key| {
            let (lambda, ms) = &acc[&key];
            if ms.is_empty() {
                return None;
            }
            let mean = |f: &dyn Fn(&CellMetrics) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / ms.len() as f64;
            Some(DatasetRow {
                dataset: key.0,
                detector: key.1,
                calibrator: key.2,
                lambda: *lambda,
                n_seeds: ms.len(),
                base_auc_roc: mean(&|m| m.baseline.auc_roc),
                cal_auc_roc: mean(&|m| m.calibrated.auc_roc),
                base_auc_pr: mean(&|m| m.baseline.auc_pr),
                cal_auc_pr: mean(&|m| m.calibrated.auc_pr),
                mean_delta_normal: mean(&|m| m.gap.mean_ot_normal),
                mean_delta_anomaly: mean(&|m| m.gap.mean_ot_anomaly),
            })
        })
        .collect()
}

fn summary_rows(rows: &[DatasetRow]) -> anyhow::Result<Vec<SummaryRow>> {
    let mut order: Vec<(String, CalibratorKind, u64)> = Vec::new();
    let mut acc: HashMap<(String, CalibratorKind, u64), Vec<&DatasetRow>> = HashMap::new();
    for r in rows {
        let key = (r.detector.clone(), r.calibrator, lambda_key(r.lambda));
        acc.entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &acc[&key];
            let col = |f: fn(&DatasetRow) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (b_roc, c_roc) = (col(|r| r.base_auc_roc), col(|r| r.cal_auc_roc));
            let (b_pr, c_pr) = (col(|r| r.base_auc_pr), col(|r| r.cal_auc_pr));
            let n = rs.len() as f64;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
            let wins = |c: &[f64], b: &[f64]| c.iter().zip(b).filter(|(c, b)| c > b).count();
            let test = |c: &[f64], b: &[f64]| {
                if rs.len() >= 2 {
                    paired_t_test_one_tailed(c, b).ok()
                } else {
                    None
                }
            };
            Ok(SummaryRow {
                detector: key.0,
                calibrator: key.1,
                lambda: rs[0].lambda,
                n_datasets: rs.len(),
                base_auc_roc: mean(&b_roc),
                cal_auc_roc: mean(&c_roc),
                improv_auc_roc: mean(&c_roc) - mean(&b_roc),
                wins_auc_roc: wins(&c_roc, &b_roc),
                base_auc_pr: mean(&b_pr),
                cal_auc_pr: mean(&c_pr),
                improv_auc_pr: mean(&c_pr) - mean(&b_pr),
                wins_auc_pr: wins(&c_pr, &b_pr),
                gap_positive: rs.iter().filter(|r| r.mean_delta_anomaly > r.mean_delta_normal).count(),
                test_auc_roc: test(&c_roc, &b_roc),
                test_auc_pr: test(&c_pr, &b_pr),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    K,
    M,
    Lambda,
}

impl std::str::FromStr for SweepParam {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "k" => Ok(SweepParam::K),
            "m" => Ok(SweepParam::M),
            "lambda" => Ok(SweepParam::Lambda),
            _ => anyhow::bail!("unknown sweep parameter {s:?} (expected k, m or lambda)"),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::K => "k",
            SweepParam::M => "m",
            SweepParam::Lambda => "lambda",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub cell: CellResult,
}

/// Reruns the grid once per value of `param` with everything else fixed.
/// A lambda sweep reuses one set of calibration terms for all values.
pub fn sweep(cfg: &BenchConfig, param: SweepParam, values: &[f64]) -> anyhow::Result<Vec<SweepRow>> {
    anyhow::ensure!(!values.is_empty(), "sweep needs at least one value");
    let tag = |report: BenchReport, value: Option<f64>| {
        report
            .cells
            .into_iter()
            .map(|cell| SweepRow {
                param,
                value: value.unwrap_or(cell.lambda),
                cell,
            })
            .collect::<Vec<_>>()
    };
    if param == SweepParam::Lambda {
        let report = run_bench(&BenchConfig {
            lambdas: values.to_vec(),
            ..cfg.clone()
        })?;
        return Ok(tag(report, None));
    }
    let mut rows = Vec::new();
    for &v in values {
        anyhow::ensure!(
            v >= 0.0 && v.fract() == 0.0,
            "{param} must be a nonnegative integer, got {v}"
        );
        let mut c = cfg.clone();
        match param {
            SweepParam::K => c.calibrator.k = v as usize,
            SweepParam::M => c.calibrator.m = v as usize,
            SweepParam::Lambda => unreachable!(),
        }
        rows.extend(tag(run_bench(&c)?, Some(v)));
    }
    Ok(rows)
}
