//! CSV and JSON writers for command outputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use ctad::calibrate::CalibrationRecord;
use ctad::ot::TransportPlan;
use ctad::PairedTestResult;
use serde::Serialize;

use crate::bench::{BenchReport, CellOutcome, SweepRow};

fn writer(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// `row_index,base_score,delta,calibrated_score,label`; `row_index` is the
/// source row of each test point.
pub fn write_calibration_csv(
    path: &Path,
    rows: &[usize],
    records: &[CalibrationRecord],
    labels: &[u8],
) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["row_index", "base_score", "delta", "calibrated_score", "label"])?;
    for ((i, r), l) in rows.iter().zip(records).zip(labels) {
        w.write_record([
            i.to_string(),
            num(r.base_score),
            num(r.delta),
            num(r.calibrated),
            l.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores_csv(path: &Path, rows: &[usize], scores: &[f64], labels: &[u8]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["row_index", "score", "label"])?;
    for ((i, s), l) in rows.iter().zip(scores).zip(labels) {
        w.write_record([i.to_string(), num(*s), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Features then label, with generated `f0..` headers.
pub fn write_matrix_csv(path: &Path, features: &ctad::Matrix, labels: &[u8]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = (0..features.cols()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, l) in features.iter_rows().zip(labels) {
        let mut rec: Vec<String> = row.iter().map(|&v| num(v)).collect();
        rec.push(l.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lines(path: &Path, values: impl IntoIterator<Item = impl std::fmt::Display>) -> anyhow::Result<()> {
    let mut f =
        std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for v in values {
        writeln!(f, "{v}")?;
    }
    f.flush()?;
    Ok(())
}

fn opt_test(t: &Option<PairedTestResult>) -> [String; 2] {
    match t {
        Some(t) => [num(t.t_stat), num(t.p_value)],
        None => [String::new(), String::new()],
    }
}

/// Writes `report.json`, `cells.csv`, `datasets.csv`, `summary.csv` and
/// `timing.csv` into `dir`. Only `timing.csv` and the `timings` field of
/// `report.json` vary between identical runs.
pub fn write_bench_report(dir: &Path, report: &BenchReport) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("report.json"), report)?;

    let mut w = writer(&dir.join("cells.csv"))?;
    w.write_record([
        "dataset",
        "detector",
        "calibrator",
        "seed",
        "lambda",
        "status",
        "base_auc_roc",
        "cal_auc_roc",
        "base_auc_pr",
        "cal_auc_pr",
        "delta_mean",
        "delta_normal",
        "delta_anomaly",
        "error",
    ])?;
    for c in &report.cells {
        let mut rec = vec![
            c.dataset.clone(),
            c.detector.clone(),
            c.calibrator.to_string(),
            c.seed.to_string(),
            num(c.lambda),
        ];
        match &c.outcome {
            CellOutcome::Ok(m) => rec.extend([
                "ok".into(),
                num(m.baseline.auc_roc),
                num(m.calibrated.auc_roc),
                num(m.baseline.auc_pr),
                num(m.calibrated.auc_pr),
                num(m.delta.mean),
                num(m.gap.mean_ot_normal),
                num(m.gap.mean_ot_anomaly),
                String::new(),
            ]),
            CellOutcome::Failed { stage, error } => {
                rec.push("failed".into());
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(format!("{stage}: {error}"));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = writer(&dir.join("datasets.csv"))?;
    for r in &report.datasets {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut w = writer(&dir.join("summary.csv"))?;
    w.write_record([
        "detector",
        "calibrator",
        "lambda",
        "n_datasets",
        "base_auc_roc",
        "cal_auc_roc",
        "improv_auc_roc",
        "wins_auc_roc",
        "t_auc_roc",
        "p_auc_roc",
        "base_auc_pr",
        "cal_auc_pr",
        "improv_auc_pr",
        "wins_auc_pr",
        "t_auc_pr",
        "p_auc_pr",
        "gap_positive",
    ])?;
    for s in &report.summary {
        let mut rec = vec![
            s.detector.clone(),
            s.calibrator.to_string(),
            num(s.lambda),
            s.n_datasets.to_string(),
            num(s.base_auc_roc),
            num(s.cal_auc_roc),
            num(s.improv_auc_roc),
            s.wins_auc_roc.to_string(),
        ];
        rec.extend(opt_test(&s.test_auc_roc));
        rec.extend([
            num(s.base_auc_pr),
            num(s.cal_auc_pr),
            num(s.improv_auc_pr),
            s.wins_auc_pr.to_string(),
        ]);
        rec.extend(opt_test(&s.test_auc_pr));
        rec.push(s.gap_positive.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = writer(&dir.join("timing.csv"))?;
    for t in &report.timings {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per (value, cell).
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "param",
        "value",
        "dataset",
        "detector",
        "calibrator",
        "seed",
        "lambda",
        "status",
        "base_auc_roc",
        "cal_auc_roc",
        "base_auc_pr",
        "cal_auc_pr",
    ])?;
    for r in rows {
        let c = &r.cell;
        let mut rec = vec![
            r.param.to_string(),
            num(r.value),
            c.dataset.clone(),
            c.detector.clone(),
            c.calibrator.to_string(),
            c.seed.to_string(),
            num(c.lambda),
        ];
        match c.metrics() {
            Some(m) => rec.extend([
                "ok".into(),
                num(m.baseline.auc_roc),
                num(m.calibrated.auc_roc),
                num(m.baseline.auc_pr),
                num(m.calibrated.auc_pr),
            ]),
            None => {
                rec.push("failed".into());
                rec.extend(std::iter::repeat_n(String::new(), 4));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text rendering of a solved transport problem.
pub fn format_plan(plan: &TransportPlan) -> String {
    let mut s = format!("cost {}\npivots {}\nplan\n", plan.cost, plan.pivots);
    for row in plan.mass.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

/// Reads a headerless numeric CSV into a matrix. A first line that does not
/// parse as numbers is taken as a header and skipped.
pub fn read_cost_csv(path: &Path) -> anyhow::Result<ctad::Matrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if line == 0 => continue,
            Err(e) => anyhow::bail!("{}: line {}: {e}", path.display(), line + 1),
        }
    }
    Ok(ctad::Matrix::from_rows(&rows)?)
}
