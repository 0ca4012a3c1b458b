use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctad::theory::{generate, SyntheticSpec};
use ctad_cli::output::write_matrix_csv;
use tempfile::TempDir;

fn ctad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctad")).args(args).output().unwrap()
}

fn dataset(dir: &Path) -> PathBuf {
    let data = generate(&SyntheticSpec {
        n_train: 80,
        n_test_normal: 30,
        n_test_anomaly: 10,
        cluster_std: 0.3,
        anomaly_offset: 2.0,
        seed: 5,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .to_dataset("toy")
    .unwrap();
    let path = dir.join("toy.csv");
    write_matrix_csv(&path, &data.features, &data.labels).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn calibrate_writes_csv_and_header() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path());
    let out = tmp.path().join("cal");
    let o = ctad(&["calibrate", "--data", s(&data), "--seed", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let (header, rows) = read_csv(&out.join("calibration.csv"));
    assert_eq!(
        header,
        ["row_index", "base_score", "delta", "calibrated_score", "label"]
    );
    // 110 normals split in half, plus 10 anomalies.
    assert_eq!(rows.len(), 65);
    for r in &rows {
        let base: f64 = r[1].parse().unwrap();
        let delta: f64 = r[2].parse().unwrap();
        let cal: f64 = r[3].parse().unwrap();
        assert!(delta >= 0.0);
        assert_eq!(cal, base + delta);
    }

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["kind"], "ctad");
    assert_eq!(json["config"]["m"], 20);
    assert_eq!(json["config"]["k"], 5);
    assert_eq!(json["detector"]["kind"], "knn");
    assert_eq!(json["n_test"], 65);
}

#[test]
fn cached_centroids_reproduce_calibration() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path());
    let km = tmp.path().join("km");
    let o = ctad(&[
        "fit-kmeans",
        "--data",
        s(&data),
        "--seed",
        "8",
        "--k",
        "4",
        "--out",
        s(&km),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let centroids = km.join("centroids.json");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&centroids).unwrap()).unwrap();
    assert_eq!(json["k"], 4);

    let direct = tmp.path().join("direct");
    let cached = tmp.path().join("cached");
    let base = ["calibrate", "--data", s(&data), "--seed", "8", "--k", "4", "--m", "10"];
    assert!(ctad(&[&base[..], &["--out", s(&direct)]].concat()).status.success());
    let o = ctad(&[&base[..], &["--out", s(&cached), "--centroids", s(&centroids)]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(direct.join("calibration.csv")).unwrap(),
        std::fs::read(cached.join("calibration.csv")).unwrap()
    );
}

#[test]
fn external_scores_follow_split_order() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path());
    let split_dir = tmp.path().join("split");
    let o = ctad(&[
        "split",
        "--data",
        s(&data),
        "--seed",
        "2",
        "--out",
        s(&split_dir),
        "--emit-order",
    ]);
    assert!(o.status.success());
    let order: Vec<usize> = std::fs::read_to_string(split_dir.join("test_order.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    let (_, test_rows) = read_csv(&split_dir.join("test.csv"));
    assert_eq!(order.len(), test_rows.len());

    // Score each test row by its source index.
    let scores: String = order.iter().map(|i| format!("{}\n", *i as f64 / 10.0)).collect();
    let score_file = tmp.path().join("scores.txt");
    std::fs::write(&score_file, scores).unwrap();
    let out = tmp.path().join("ext");
    let det = format!("external:{}", s(&score_file));
    let o = ctad(&[
        "calibrate",
        "--data",
        s(&data),
        "--seed",
        "2",
        "--detector",
        &det,
        "--calibrator",
        "none",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&out.join("calibration.csv"));
    for r in rows {
        let idx: f64 = r[0].parse().unwrap();
        assert_eq!(r[1].parse::<f64>().unwrap(), idx / 10.0);
    }

    // A file of the wrong length is rejected.
    std::fs::write(&score_file, "1.0\n2.0\n").unwrap();
    let o = ctad(&[
        "score",
        "--data",
        s(&data),
        "--seed",
        "2",
        "--detector",
        &det,
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn score_writes_one_row_per_test_point() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path());
    let out = tmp.path().join("score");
    for det in ["knn", "pca", "ecod", "iforest"] {
        let o = ctad(&["score", "--data", s(&data), "--detector", det, "--out", s(&out)]);
        assert!(o.status.success(), "{det}: {}", String::from_utf8_lossy(&o.stderr));
        let (header, rows) = read_csv(&out.join("scores.csv"));
        assert_eq!(header, ["row_index", "score", "label"]);
        assert_eq!(rows.len(), 65);
    }
}

#[test]
fn bench_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path());
    let out = tmp.path().join("bench");
    let args = [
        "bench",
        "--data",
        s(&data),
        "--detector",
        "knn,ecod",
        "--calibrator",
        "ctad,none",
        "--seed",
        "0,1",
        "--out",
        s(&out),
    ];
    let o = ctad(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "cells.csv", "datasets.csv", "summary.csv", "timing.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let cells_first = std::fs::read(out.join("cells.csv")).unwrap();
    assert!(ctad(&args).status.success());
    assert_eq!(cells_first, std::fs::read(out.join("cells.csv")).unwrap());

    let missing = format!("{},{}", s(&data), s(&tmp.path().join("missing.csv")));
    let o = ctad(&["bench", "--data", &missing, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let (_, rows) = read_csv(&out.join("cells.csv"));
    assert_eq!(rows.iter().filter(|r| r[5] == "failed").count(), 1);

    assert_eq!(ctad(&["bench", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(
        ctad(&["bench", "--data", s(&data), "--calibrator", "bogus"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        ctad(&["bench", "--data", s(&data), "--k", "0", "--out", s(&out)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn sweep_writes_long_format() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path());
    let out = tmp.path().join("sweep");
    let o = ctad(&[
        "sweep",
        "--data",
        s(&data),
        "--param",
        "lambda",
        "--values",
        "0,1,-0.5",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("sweep.csv"));
    assert_eq!(header[..3], ["param", "value", "dataset"]);
    assert_eq!(rows.len(), 3);
    let zero = rows.iter().find(|r| r[1] == "0").unwrap();
    assert_eq!(zero[8], zero[9]);
    assert_eq!(zero[10], zero[11]);
}

#[test]
fn theory_check_reports_all_fields() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("theory.json");
    let o = ctad(&["theory-check", "--runs", "3", "--trials", "40", "--out", s(&path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let check = &json["checks"][0];
    for field in [
        "mean_ot_normal",
        "mean_ot_anomaly",
        "empirical_gap",
        "gap_se",
        "predicted_floor",
        "holds",
        "eps_hat",
        "eta_hat",
    ] {
        assert!(!check[field].is_null(), "{field}");
    }
    assert_eq!(json["checks"].as_array().unwrap().len(), 3);
    assert_eq!(json["variance"]["rows"].as_array().unwrap().len(), 4);
    assert_eq!(json["gap_positive"], 3);
}

#[test]
fn profile_prints_summary() {
    let o = ctad(&["profile", "--samples", "300", "--dim", "6"]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["m"], 20);
    assert!(json["median_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn ot_debug_prints_plan() {
    let tmp = TempDir::new().unwrap();
    let cost = tmp.path().join("cost.csv");
    std::fs::write(&cost, "c0,c1\n0,2\n2,0\n").unwrap();
    let o = ctad(&["ot", "--cost", s(&cost)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("cost 0\n"), "{text}");
    assert!(text.contains("0.500000 0.000000\n0.000000 0.500000"), "{text}");

    let o = ctad(&["ot", "--cost", s(&cost), "--json"]);
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["cost"], 0.0);

    std::fs::write(&cost, "1,-2\n").unwrap();
    assert_eq!(ctad(&["ot", "--cost", s(&cost)]).status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    assert!(ctad(&["--help"]).status.success());
    assert_eq!(ctad(&["no-such-command"]).status.code(), Some(1));
}
