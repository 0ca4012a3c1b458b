//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 8 and 10 read real datasets from `CTAD_DATA_DIR` when it is set
//! (`breastw.csv`, `cardio.csv`, `wbc.csv`, `ionosphere.csv`, label column
//! from `CTAD_LABEL_COL`, default `label`) and otherwise run on generated
//! clusters.
//!
//! The process exits nonzero when a criterion fails, except for the ones in
//! `KNOWN_FAILING`, whose failure is expected and explained in their detail
//! line. Set `CTAD_ACCEPTANCE_STRICT=1` to fail on those as well.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ctad::calibrate::{fuse, CalibratorKind, Normalize};
use ctad::kmeans::nearest_centroid_distance;
use ctad::metrics::{auc_pr, auc_roc, paired_t_test_one_tailed};
use ctad::oracle::{brute_force_transport, pairwise_auc, t_upper_tail_by_quadrature};
use ctad::ot::{ot_distance, solve_ot, CostMatrix};
use ctad::seed::{derive_seed, rng};
use ctad::theory::{check_gap, check_variance, SyntheticSpec};
use ctad::{fit_calibrator, CalibratorConfig, CentroidSet, DetectorSpec, LabelColumn, Matrix};
use ctad_cli::{profile_ot, run_bench, BenchConfig, DatasetSource};
use rand::Rng;

/// The nearest-assignment cost is a relaxation of the transport problem,
/// so it cannot bound the optimum from above once centroid capacities bind.
const KNOWN_FAILING: &[u8] = &[3];

const TOL: f64 = 1e-9;

type Criterion<'a> = (u8, &'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn ot_exactness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(derive_seed(1, "acceptance"));
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let rows = r.random_range(1..=5);
        let cols = r.random_range(1..=4);
        let cost = random_matrix(&mut r, rows, cols);
        let cost = Matrix::new(rows, cols, cost.as_slice().iter().map(|v| (v + 1.0) / 2.0).collect()).unwrap();
        let fast = solve_ot(&CostMatrix::new(cost.clone()).unwrap()).unwrap().cost;
        worst = worst.max((fast - brute_force_transport(&cost)).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= TOL && elapsed < Duration::from_secs(10),
        format!(
            "200 instances, max |solver - oracle| = {worst:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// 1000 random problems: (ot, d*/(M+1), (sum d_i + d*)/(M+1)).
fn bound_campaign() -> Vec<(f64, f64, f64)> {
    let mut r = rng(derive_seed(2, "acceptance"));
    (0..1000)
        .map(|_| {
            let m = r.random_range(0..=10);
            let k = r.random_range(1..=5);
            let d = r.random_range(1..=8);
            let refs = random_matrix(&mut r, m, d);
            let q = CentroidSet::from_centroids(random_matrix(&mut r, k, d)).unwrap();
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let ot = ot_distance(&refs, &x, &q).unwrap();
            let d_star = nearest_centroid_distance(&q, &x).unwrap();
            let d_sum: f64 = refs
                .iter_rows()
                .map(|p| nearest_centroid_distance(&q, p).unwrap())
                .sum();
            let m1 = (m + 1) as f64;
            (ot, d_star / m1, (d_sum + d_star) / m1)
        })
        .collect()
}

fn lower_bound(campaign: &[(f64, f64, f64)]) -> Outcome {
    let violations = campaign.iter().filter(|(ot, lo, _)| *ot < lo - TOL).count();
    outcome(violations == 0, format!("{violations} of 1000 below d*/(M+1)"))
}

fn upper_bound(campaign: &[(f64, f64, f64)]) -> Outcome {
    let violations: Vec<f64> = campaign
        .iter()
        .filter(|(ot, _, up)| *ot > up + TOL)
        .map(|(ot, _, up)| ot - up)
        .collect();
    let worst = violations.iter().copied().fold(0.0, f64::max);
    outcome(
        violations.is_empty(),
        format!(
            "{} of 1000 above (sum d_i + d*)/(M+1), worst excess {worst:.3}; equal centroid masses force \
             points off their nearest centroid, so this value only bounds the cost from below",
            violations.len()
        ),
    )
}

fn gap_regime() -> Outcome {
    let start = Instant::now();
    let (mut positive, mut holds) = (0, 0);
    for seed in 0..100 {
        let spec = SyntheticSpec {
            seed,
            ..SyntheticSpec::default()
        };
        let c = check_gap(&spec, 20, 3, seed).unwrap();
        positive += usize::from(c.empirical_gap > 0.0);
        holds += usize::from(c.holds);
    }
    let elapsed = start.elapsed();
    outcome(
        positive >= 99 && holds >= 95 && elapsed < Duration::from_secs(120),
        format!(
            "gap > 0 in {positive}/100, >= floor - 3 SE in {holds}/100, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn variance_trend() -> Outcome {
    let t = check_variance(&SyntheticSpec::default(), &[5, 10, 20, 40], 3, 200).unwrap();
    let vars: Vec<String> = t.rows.iter().map(|r| format!("{:.3e}", r.var_delta)).collect();
    outcome(
        t.non_increasing(0.10) && t.log_log_slope <= -0.5,
        format!(
            "Var over M=5,10,20,40: [{}], slope {:.3}",
            vars.join(", "),
            t.log_log_slope
        ),
    )
}

fn calibration_identity() -> Outcome {
    let mut checked = 0;
    let mut mismatches = 0;
    let specs = [
        SyntheticSpec::default(),
        SyntheticSpec {
            k_clusters: 5,
            cluster_std: 0.6,
            anomaly_offset: 1.0,
            dim: 7,
            seed: 9,
            ..SyntheticSpec::default()
        },
    ];
    let detectors = [
        DetectorSpec::knn(),
        DetectorSpec::Pca { components: None },
        DetectorSpec::Ecod,
        DetectorSpec::iforest(),
    ];
    for spec in &specs {
        let data = ctad::theory::generate(spec).unwrap();
        for det in &detectors {
            let base = det.fit(&data.train, 3).unwrap().score_batch(&data.test).unwrap();
            for (kind, lambda) in [
                (CalibratorKind::Ctad, 0.0),
                (CalibratorKind::None, 1.0),
                (CalibratorKind::None, 0.0),
            ] {
                let cfg = CalibratorConfig {
                    kind,
                    lambda,
                    ..CalibratorConfig::default()
                };
                let state = fit_calibrator(&data.train, &cfg).unwrap();
                let deltas = state.deltas(&data.test).unwrap();
                let cal: Vec<f64> = fuse(kind, &base, &deltas, lambda, Normalize::None)
                    .unwrap()
                    .iter()
                    .map(|r| r.calibrated)
                    .collect();
                let same_scores = cal.iter().zip(&base).all(|(a, b)| a.to_bits() == b.to_bits());
                let same_metrics = auc_roc(&cal, &data.test_labels).unwrap().to_bits()
                    == auc_roc(&base, &data.test_labels).unwrap().to_bits()
                    && auc_pr(&cal, &data.test_labels).unwrap().to_bits()
                        == auc_pr(&base, &data.test_labels).unwrap().to_bits();
                checked += 1;
                mismatches += usize::from(!(same_scores && same_metrics));
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{checked} detector/calibrator pairs, {mismatches} differ"),
    )
}

fn metric_oracles() -> Outcome {
    let mut r = rng(derive_seed(7, "acceptance"));
    let mut auc_mismatch = 0;
    for _ in 0..100 {
        let n = r.random_range(2..=60);
        let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..10u8)) / 3.0).collect();
        auc_mismatch += usize::from(auc_roc(&scores, &labels).unwrap() != pairwise_auc(&scores, &labels));
    }

    // Hand-expanded: each hit contributes (1 / positives) * precision at its rank.
    let ap_cases: [(&[f64], &[u8], f64); 3] = [
        (&[0.9, 0.8, 0.1], &[1, 1, 0], 1.0),
        (&[0.9, 0.8, 0.7], &[1, 0, 1], 0.5 * 1.0 + 0.5 * (2.0 / 3.0)),
        (&[0.4, 0.3, 0.2, 0.1], &[0, 1, 0, 1], 0.5 * 0.5 + 0.5 * 0.5),
    ];
    let ap_ok = ap_cases
        .iter()
        .all(|(s, l, want)| (auc_pr(s, l).unwrap() - want).abs() <= 1e-15);

    let mut worst_p = 0.0f64;
    for probe in 0..20 {
        let n = 2 + probe;
        let before: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let after: Vec<f64> = before.iter().map(|b| b + r.random_range(-0.3..0.5)).collect();
        let t = paired_t_test_one_tailed(&after, &before).unwrap();
        let oracle = t_upper_tail_by_quadrature(t.t_stat, t.df as u32);
        worst_p = worst_p.max((t.p_value - oracle).abs());
    }
    outcome(
        auc_mismatch == 0 && ap_ok && worst_p <= 1e-8,
        format!(
            "AUC mismatches {auc_mismatch}/100, AP examples {}, max p-value error {worst_p:.2e}",
            if ap_ok { "exact" } else { "wrong" }
        ),
    )
}

fn real_sources() -> Option<Vec<DatasetSource>> {
    let dir = PathBuf::from(std::env::var_os("CTAD_DATA_DIR")?);
    let label: LabelColumn = std::env::var("CTAD_LABEL_COL")
        .unwrap_or_else(|_| "label".into())
        .parse()
        .unwrap();
    let found: Vec<DatasetSource> = ["breastw", "cardio", "wbc", "ionosphere"]
        .iter()
        .map(|n| dir.join(format!("{n}.csv")))
        .filter(|p| p.exists())
        .map(|p| DatasetSource::csv(p, label.clone()))
        .collect();
    (!found.is_empty()).then_some(found)
}

fn knn_ctad(datasets: Vec<DatasetSource>, seeds: std::ops::Range<u64>) -> BenchConfig {
    BenchConfig {
        datasets,
        detectors: vec![DetectorSpec::knn()],
        calibrators: vec![CalibratorKind::Ctad],
        calibrator: CalibratorConfig::default(),
        lambdas: vec![1.0],
        seeds: seeds.collect(),
        out_dir: None,
        jobs: 0,
        standardize: true,
    }
}

fn improvement(real: Option<&[DatasetSource]>) -> Outcome {
    if let Some(sources) = real {
        let report = run_bench(&knn_ctad(sources.to_vec(), 0..5)).unwrap();
        let better = report
            .datasets
            .iter()
            .filter(|d| d.cal_auc_roc >= d.base_auc_roc)
            .count();
        return outcome(
            better >= 3.min(sources.len()) && report.failures() == 0,
            format!(
                "real data: calibrated >= baseline mean AUC-ROC on {better}/{} datasets",
                sources.len()
            ),
        );
    }
    let synthetic = DatasetSource::Synthetic {
        name: "clusters".into(),
        spec: SyntheticSpec::default(),
    };
    let report = run_bench(&knn_ctad(vec![synthetic], 0..100)).unwrap();
    let cells: Vec<_> = report.cells.iter().filter_map(|c| c.metrics()).collect();
    let not_worse = cells
        .iter()
        .filter(|m| m.calibrated.auc_roc >= m.baseline.auc_roc)
        .count();
    let strictly = cells
        .iter()
        .filter(|m| m.calibrated.auc_roc > m.baseline.auc_roc)
        .count();
    let perfect = cells.iter().filter(|m| m.baseline.auc_roc == 1.0).count();
    outcome(
        cells.len() == 100 && not_worse >= 95,
        format!(
            "generated clusters: calibrated >= baseline in {not_worse}/100 seeds \
             (strictly higher in {strictly}, baseline already 1.0 in {perfect})"
        ),
    )
}

fn runtime() -> Outcome {
    let s = profile_ot(20, 5, 20, 10_000, 0).unwrap();
    outcome(
        s.median_ms < 2.0,
        format!(
            "M=20 K=5 D=20: median {:.4} ms, p95 {:.4} ms per sample",
            s.median_ms, s.p95_ms
        ),
    )
}

fn gap_report_check(real: Option<&[DatasetSource]>) -> Outcome {
    let (sources, what) = match real {
        Some(s) => (s.to_vec(), "real data"),
        None => {
            let variants = [(3, 0.05, 5.0, 4), (5, 0.2, 3.0, 8), (2, 0.5, 4.0, 16), (4, 0.1, 2.0, 6)];
            let sources = variants
                .iter()
                .enumerate()
                .map(|(i, &(k, std, offset, dim))| DatasetSource::Synthetic {
                    name: format!("clusters-{i}"),
                    spec: SyntheticSpec {
                        k_clusters: k,
                        cluster_std: std,
                        anomaly_offset: offset,
                        dim,
                        ..SyntheticSpec::default()
                    },
                })
                .collect();
            (sources, "generated clusters")
        }
    };
    let n = sources.len();
    let report = run_bench(&knn_ctad(sources, 0..5)).unwrap();
    let positive = report
        .datasets
        .iter()
        .filter(|d| d.mean_delta_anomaly > d.mean_delta_normal)
        .count();
    outcome(
        positive >= 3.min(n) && report.failures() == 0,
        format!("{what}: anomaly mean cost above normal mean on {positive}/{n} datasets"),
    )
}

fn main() -> ExitCode {
    let strict = std::env::var_os("CTAD_ACCEPTANCE_STRICT").is_some();
    let real = real_sources();
    let campaign = bound_campaign();
    let criteria: Vec<Criterion> = vec![
        (1, "transport solver matches oracle", Box::new(ot_exactness)),
        (2, "cost lower bound", Box::new(|| lower_bound(&campaign))),
        (3, "cost upper bound", Box::new(|| upper_bound(&campaign))),
        (4, "class gap on clustered data", Box::new(gap_regime)),
        (5, "variance shrinks with M", Box::new(variance_trend)),
        (
            6,
            "zero-weight and passthrough identity",
            Box::new(calibration_identity),
        ),
        (7, "metric oracles", Box::new(metric_oracles)),
        (8, "KNN improvement", Box::new(|| improvement(real.as_deref()))),
        (9, "per-sample solve time", Box::new(runtime)),
        (10, "gap report", Box::new(|| gap_report_check(real.as_deref()))),
    ];

    let mut blocking = 0;
    for (id, name, check) in &criteria {
        let o = check();
        let known = KNOWN_FAILING.contains(id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("{tag:<12} {id:>2}. {name}: {}", o.detail);
        if !o.pass && (strict || !known) {
            blocking += 1;
        }
    }
    if blocking == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{blocking} blocking failure(s)");
        ExitCode::FAILURE
    }
}
