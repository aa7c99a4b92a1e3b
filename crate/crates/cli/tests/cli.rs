use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use headlab::output::{CsvTable, REPORT_FILE};
use serde_json::Value;

fn headlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_headlab"))
        .args(args)
        .current_dir(dir)
        .env("HEADLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(REPORT_FILE)).unwrap()).unwrap()
}

#[test]
fn unknown_override_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[scenario]\nanalysis.trails = 3\n");
    let out = headlab(&["whitening-check", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trails"));
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn mismatched_scenario_name_and_bad_seeds_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[scenario]\nname = \"probe\"\n");
    assert_eq!(headlab(&["orbits", "--config", &cfg], tmp.path()).status.code(), Some(2));
    let out = headlab(&["whitening-check", "--seeds", "1,1"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_headlab"))
        .args(["whitening-check", "--seeds", "0"])
        .current_dir(tmp.path())
        .env("HEADLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

/// Aggregates in report.json are recomputed from the per-seed CSVs.
#[test]
fn aggregates_match_per_seed_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[scenario]\nseeds = [3, 4, 5]\noutput_dir = \"out\"\nanalysis.trials = 12\n",
    );
    let out = headlab(&["whitening-check", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    let rep = report(&dir);
    let hash = rep["config_sha256"].as_str().unwrap();
    let mut maxima = Vec::new();
    for seed in [3, 4, 5] {
        let name = format!("whitening-check-{}-main-seed{seed}.csv", &hash[..8]);
        let text = fs::read_to_string(dir.join(&name)).unwrap();
        assert!(text.starts_with(&format!("# config_sha256={hash}\n")));
        let t = CsvTable::read(&dir.join(&name)).unwrap();
        assert_eq!(t.rows.len(), 12);
        maxima.push(t.column("deviation").unwrap().into_iter().fold(0.0, f64::max));
    }
    let mean = maxima.iter().sum::<f64>() / 3.0;
    let std = (maxima.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    let agg = &rep["aggregates"]["main/max_deviation"];
    assert!((agg["mean"].as_f64().unwrap() - mean).abs() <= 1e-12 * mean.abs().max(1e-300));
    assert!((agg["std"].as_f64().unwrap() - std).abs() <= 1e-12 * std.abs().max(1e-300));
    assert_eq!(agg["seeds"], serde_json::json!([3, 4, 5]));
    assert!(rep["failures"].as_array().unwrap().is_empty());
}

#[test]
fn orbit_run_writes_logs_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[scenario]\nrun.epochs = 3\nanalysis.anchors = 4\n");
    let out = headlab(&["orbits", "--config", &cfg, "--seeds", "0", "--out", "o", "--plots"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("o");
    let names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for suffix in [
        "-main-seed0.jsonl",
        "-main-seed0.csv",
        "-main-metrics-seed0.csv",
        "-main-points-head-seed0.csv",
        "-main-variance.svg",
        "-main-pca-head-seed0.svg",
    ] {
        assert!(names.iter().any(|n| n.ends_with(suffix)), "missing *{suffix} in {names:?}");
    }
    assert!(names.iter().any(|n| n == "run.meta.json"));
    let epochs = names.iter().find(|n| n.ends_with("-main-seed0.csv")).unwrap();
    assert_eq!(CsvTable::read(&dir.join(epochs)).unwrap().rows.len(), 4);
    let jsonl = fs::read_to_string(dir.join(names.iter().find(|n| n.ends_with(".jsonl")).unwrap())).unwrap();
    let mut lines = jsonl.lines();
    let head: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert!(head["config_sha256"].is_string());
    for line in lines {
        let row: Value = serde_json::from_str(line).unwrap();
        assert!(row["step"].is_u64());
    }
    let rep = report(&dir);
    assert_eq!(rep["svg"].as_array().unwrap().len(), names.iter().filter(|n| n.ends_with(".svg")).count());
    assert!(rep["aggregates"]["main/head/local_curvature"]["mean"].is_f64());
}

#[test]
fn diverging_seeds_exit_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[scenario]\nrun.optimizer.kind = { kind = \"sgd\", momentum = 0.9 }\nrun.optimizer.learning_rate = 1e150\nrun.epochs = 2\nanalysis.anchors = 2\n",
    );
    let out = headlab(&["orbits", "--config", &cfg, "--seeds", "0", "--out", "d"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let rep = report(&tmp.path().join("d"));
    let failures = rep["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["seed"], 0);
}
