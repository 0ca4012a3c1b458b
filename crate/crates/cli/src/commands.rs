use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ctad::calibrate::{calibrate_scores, CalibratorKind, Normalize, DEFAULT_LAMBDA, DEFAULT_M};
use ctad::kmeans::DEFAULT_K;
use ctad::ot::{solve_ot, CostMatrix};
use ctad::seed::derive_seed;
use ctad::theory::{self, GapCheck, SyntheticSpec, VarianceTable};
use ctad::{evaluate, CalibratorConfig, CentroidSet, DetectorSpec, EvalResult, LabelColumn};
use serde::Serialize;

use crate::bench::{run_bench, sweep, BenchConfig, SweepParam};
use crate::output;
use crate::pipeline::{self, stage, DatasetSource};
use crate::profile::profile_ot;

#[derive(Debug, Parser)]
#[command(name = "ctad", version, about = "Transport-calibrated anomaly scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a dataset into one-class train and mixed test halves.
    Split(SplitArgs),
    /// Fit the centroid measure and save it as JSON.
    FitKmeans(FitKmeansArgs),
    /// Fit a base detector and score the test split.
    Score(ScoreArgs),
    /// Score, then add the calibration term.
    Calibrate(CalibrateArgs),
    /// Run the dataset x detector x calibrator x seed grid.
    Bench(BenchArgs),
    /// Rerun the grid over values of k, m or lambda.
    Sweep(SweepArgs),
    /// Check the class gap and variance trend on synthetic clusters.
    TheoryCheck(TheoryArgs),
    /// Time the per-sample transport solve.
    Profile(ProfileArgs),
    /// Solve a transport problem for a hand-written cost matrix.
    Ot(OtArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Headed CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column, by header name or zero-based index.
    #[arg(long, default_value = "label")]
    pub label_col: LabelColumn,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip z-scoring with training statistics.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct CalibArgs {
    #[arg(long, default_value = "ctad")]
    pub calibrator: CalibratorKind,
    /// Reference sample size.
    #[arg(long, default_value_t = DEFAULT_M)]
    pub m: usize,
    /// Number of centroids.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA, allow_hyphen_values = true)]
    pub lambda: f64,
    #[arg(long, default_value = "none")]
    pub normalize: Normalize,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write `test_order.txt`, the source row of each test row.
    #[arg(long)]
    pub emit_order: bool,
}

#[derive(Debug, Args)]
pub struct FitKmeansArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "knn", value_parser = DetectorSpec::parse)]
    pub detector: DetectorSpec,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "knn", value_parser = DetectorSpec::parse)]
    pub detector: DetectorSpec,
    #[command(flatten)]
    pub calib: CalibArgs,
    /// Centroid JSON from `fit-kmeans`; skips refitting.
    #[arg(long)]
    pub centroids: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Comma-separated CSV paths.
    #[arg(long, value_delimiter = ',')]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value = "label")]
    pub label_col: LabelColumn,
    #[arg(long, value_delimiter = ',', default_value = "knn", value_parser = DetectorSpec::parse)]
    pub detector: Vec<DetectorSpec>,
    #[arg(long, value_delimiter = ',', default_value = "ctad")]
    pub calibrator: Vec<CalibratorKind>,
    #[arg(long, default_value_t = DEFAULT_M)]
    pub m: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_value = "1.0", allow_hyphen_values = true)]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seed: Vec<u64>,
    #[arg(long, default_value = "none")]
    pub normalize: Normalize,
    #[arg(long)]
    pub no_standardize: bool,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// JSON bench config; replaces the grid flags above except `--jobs`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
}

impl GridArgs {
    fn to_config(&self) -> anyhow::Result<BenchConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => BenchConfig {
                datasets: self
                    .data
                    .iter()
                    .map(|p| DatasetSource::csv(p, self.label_col.clone()))
                    .collect(),
                detectors: self.detector.clone(),
                calibrators: self.calibrator.clone(),
                calibrator: CalibratorConfig {
                    m: self.m,
                    k: self.k,
                    lambda: self.lambda.first().copied().unwrap_or(DEFAULT_LAMBDA),
                    normalize: self.normalize,
                    ..CalibratorConfig::default()
                },
                lambdas: self.lambda.clone(),
                seeds: self.seed.clone(),
                out_dir: Some(self.out.clone()),
                jobs: 0,
                standardize: !self.no_standardize,
            },
        };
        cfg.jobs = self.jobs;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// k, m or lambda.
    #[arg(long)]
    pub param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub values: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, default_value_t = 3)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0.05)]
    pub std: f64,
    #[arg(long, default_value_t = 5.0)]
    pub offset: f64,
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long, default_value_t = 300)]
    pub n_train: usize,
    #[arg(long, default_value_t = 100)]
    pub n_normal: usize,
    #[arg(long, default_value_t = 30)]
    pub n_anomaly: usize,
    #[arg(long, default_value_t = DEFAULT_M)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent draws; run `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
    pub variance_m: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long, default_value_t = DEFAULT_M)]
    pub m: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub dim: usize,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OtArgs {
    /// Headerless numeric CSV; rows are sources, columns are targets.
    #[arg(long)]
    pub cost: PathBuf,
    /// Print the plan as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some grid cells failed; the count is attached.
    Partial(usize),
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Split(a) => split_cmd(&a),
        Command::FitKmeans(a) => fit_kmeans_cmd(&a),
        Command::Score(a) => score_cmd(&a),
        Command::Calibrate(a) => calibrate_cmd(&a),
        Command::Bench(a) => bench_cmd(&a),
        Command::Sweep(a) => sweep_cmd(&a),
        Command::TheoryCheck(a) => theory_cmd(&a),
        Command::Profile(a) => profile_cmd(&a),
        Command::Ot(a) => ot_cmd(&a),
    }
    .map(|()| Outcome::Success)
    .or_else(|e| match e.downcast::<PartialFailure>() {
        Ok(p) => Ok(Outcome::Partial(p.0)),
        Err(e) => Err(e),
    })
}

#[derive(Debug)]
struct PartialFailure(usize);

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} grid cells failed", self.0)
    }
}

impl std::error::Error for PartialFailure {}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_prepared(a: &DataArgs) -> anyhow::Result<(ctad::Dataset, pipeline::Prepared)> {
    let ds = ctad::load_csv(&a.data, &a.label_col)?;
    let p = pipeline::prepare(&ds, a.seed, !a.no_standardize)?;
    Ok((ds, p))
}

fn split_cmd(a: &SplitArgs) -> anyhow::Result<()> {
    let (_, p) = load_prepared(&a.data)?;
    create_dir(&a.out)?;
    let s = &p.split;
    output::write_matrix_csv(&a.out.join("train.csv"), &s.train, &vec![0; s.train.rows()])?;
    output::write_matrix_csv(&a.out.join("test.csv"), &s.test_features, &s.test_labels)?;
    if a.emit_order {
        output::write_lines(&a.out.join("test_order.txt"), &s.test_index)?;
    }
    println!(
        "train {} rows, test {} rows ({} anomalies), split seed {}",
        s.train.rows(),
        s.test_features.rows(),
        s.test_labels.iter().filter(|&&l| l == 1).count(),
        s.seed
    );
    Ok(())
}

fn fit_kmeans_cmd(a: &FitKmeansArgs) -> anyhow::Result<()> {
    let (_, p) = load_prepared(&a.data)?;
    let q = pipeline::fit_centroids(&p.train, a.k, a.data.seed)?;
    create_dir(&a.out)?;
    let path = a.out.join("centroids.json");
    q.save_json(&path)?;
    println!("k {} inertia {} -> {}", q.k, q.inertia, path.display());
    Ok(())
}

fn base_scores(det: &DetectorSpec, p: &pipeline::Prepared, seed: u64) -> anyhow::Result<Vec<f64>> {
    let model = det.fit(&p.train, derive_seed(seed, stage::DETECTOR))?;
    Ok(model.score_batch(&p.test)?)
}

fn score_cmd(a: &ScoreArgs) -> anyhow::Result<()> {
    let (_, p) = load_prepared(&a.data)?;
    let scores = base_scores(&a.detector, &p, a.data.seed)?;
    create_dir(&a.out)?;
    output::write_scores_csv(&a.out.join("scores.csv"), &p.split.test_index, &scores, p.labels())?;
    if let Ok(e) = evaluate(&scores, p.labels()) {
        println!("{} auc_roc {:.6} auc_pr {:.6}", a.detector.label(), e.auc_roc, e.auc_pr);
    }
    Ok(())
}

/// Provenance written next to `calibration.csv`.
#[derive(Debug, Serialize)]
struct CalibrationHeader {
    data: PathBuf,
    label_col: String,
    seed: u64,
    standardize: bool,
    detector: DetectorSpec,
    config: CalibratorConfig,
    centroids: Option<PathBuf>,
    n_train: usize,
    n_test: usize,
    baseline: Option<EvalResult>,
    calibrated: Option<EvalResult>,
}

fn calibrate_cmd(a: &CalibrateArgs) -> anyhow::Result<()> {
    let (_, p) = load_prepared(&a.data)?;
    let base = base_scores(&a.detector, &p, a.data.seed)?;
    let shared = CalibratorConfig {
        m: a.calib.m,
        k: a.calib.k,
        lambda: a.calib.lambda,
        normalize: a.calib.normalize,
        ..CalibratorConfig::default()
    };
    let cfg = pipeline::calibrator_config(&shared, a.calib.calibrator, a.data.seed);
    let cached = a.centroids.as_ref().map(CentroidSet::load_json).transpose()?;
    let state = pipeline::fit_state(&p.train, &cfg, cached)?;
    let records = calibrate_scores(&state, &base, &p.test, cfg.lambda)?;
    let calibrated: Vec<f64> = records.iter().map(|r| r.calibrated).collect();

    create_dir(&a.out)?;
    output::write_calibration_csv(
        &a.out.join("calibration.csv"),
        &p.split.test_index,
        &records,
        p.labels(),
    )?;
    let header = CalibrationHeader {
        data: a.data.data.clone(),
        label_col: a.data.label_col.to_string(),
        seed: a.data.seed,
        standardize: !a.data.no_standardize,
        detector: a.detector.clone(),
        config: cfg,
        centroids: a.centroids.clone(),
        n_train: p.train.rows(),
        n_test: p.test.rows(),
        baseline: evaluate(&base, p.labels()).ok(),
        calibrated: evaluate(&calibrated, p.labels()).ok(),
    };
    output::write_json(&a.out.join("calibration.json"), &header)?;
    if let (Some(b), Some(c)) = (header.baseline, header.calibrated) {
        println!(
            "{} + {}: auc_roc {:.6} -> {:.6}, auc_pr {:.6} -> {:.6}",
            a.detector.label(),
            cfg.kind,
            b.auc_roc,
            c.auc_roc,
            b.auc_pr,
            c.auc_pr
        );
    }
    Ok(())
}

fn bench_cmd(a: &BenchArgs) -> anyhow::Result<()> {
    let cfg = a.grid.to_config()?;
    let report = run_bench(&cfg)?;
    let dir = cfg.out_dir.clone().unwrap_or_else(|| a.grid.out.clone());
    output::write_bench_report(&dir, &report)?;
    for s in &report.summary {
        println!(
            "{:<10} {:<12} lambda {:<6} datasets {:>3}  auc_roc {:.4} -> {:.4}  wins {}",
            s.detector, s.calibrator, s.lambda, s.n_datasets, s.base_auc_roc, s.cal_auc_roc, s.wins_auc_roc
        );
    }
    println!(
        "{} cells, {} failed -> {}",
        report.cells.len(),
        report.failures(),
        dir.display()
    );
    match report.failures() {
        0 => Ok(()),
        n => Err(PartialFailure(n).into()),
    }
}

fn sweep_cmd(a: &SweepArgs) -> anyhow::Result<()> {
    let cfg = a.grid.to_config()?;
    let rows = sweep(&cfg, a.param, &a.values)?;
    let dir = cfg.out_dir.clone().unwrap_or_else(|| a.grid.out.clone());
    create_dir(&dir)?;
    let path = dir.join("sweep.csv");
    output::write_sweep_csv(&path, &rows)?;
    let failed = rows.iter().filter(|r| r.cell.metrics().is_none()).count();
    println!("{} rows, {} failed -> {}", rows.len(), failed, path.display());
    match failed {
        0 => Ok(()),
        n => Err(PartialFailure(n).into()),
    }
}

#[derive(Debug, Serialize)]
struct TheoryReport {
    spec: SyntheticSpec,
    checks: Vec<GapCheck>,
    gap_positive: usize,
    holds: usize,
    variance: VarianceTable,
}

fn theory_cmd(a: &TheoryArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        k_clusters: a.clusters,
        cluster_std: a.std,
        anomaly_offset: a.offset,
        n_train: a.n_train,
        n_test_normal: a.n_normal,
        n_test_anomaly: a.n_anomaly,
        dim: a.dim,
        seed: a.seed,
    };
    let checks = (0..a.runs)
        .map(|i| {
            let seed = a.seed.wrapping_add(i);
            theory::check_gap(&SyntheticSpec { seed, ..spec }, a.m, a.k, seed)
        })
        .collect::<ctad::Result<Vec<_>>>()?;
    let variance = theory::check_variance(&spec, &a.variance_m, a.k, a.trials)?;
    let report = TheoryReport {
        spec,
        gap_positive: checks.iter().filter(|c| c.empirical_gap > 0.0).count(),
        holds: checks.iter().filter(|c| c.holds).count(),
        checks,
        variance,
    };
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &a.out {
        std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{text}");
    Ok(())
}

fn profile_cmd(a: &ProfileArgs) -> anyhow::Result<()> {
    let summary = profile_ot(a.m, a.k, a.dim, a.samples, a.seed)?;
    let text = serde_json::to_string_pretty(&summary)?;
    if let Some(path) = &a.out {
        std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{text}");
    Ok(())
}

fn ot_cmd(a: &OtArgs) -> anyhow::Result<()> {
    let cost = CostMatrix::new(output::read_cost_csv(&a.cost)?)?;
    let plan = solve_ot(&cost)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&plan)?);
    } else {
        print!("{}", output::format_plan(&plan));
    }
    Ok(())
}
