use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semple::io::{metric_rows_from_csv, read_samples, ObservedData, RunManifest};

fn semple(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semple"))
        .args(args)
        .current_dir(dir)
        .env("SEMPLE_OUTPUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semple(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL_RUN: &str = "semple.R = 1\nsemple.N = 300\nsemple.K0 = 3\n";

#[test]
fn simulate_ou_uses_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--task", "ou", "--seed", "7", "--out", "obs.csv"]);
    let obs = ObservedData::read(&dir.path().join("obs.csv")).unwrap();
    assert_eq!(obs.header.theta, vec![3.0, 1.0, 0.5]);
    assert_eq!((obs.ys.nrows(), obs.ys.ncols()), (1, 51));
    assert_eq!(obs.header.task, "ou");
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["simulate", "--task", "two_moons", "--theta", "0,0", "--n", "3", "--seed", "5", "--out", out];
    ok(dir.path(), &args("a.csv"));
    ok(dir.path(), &args("b.csv"));
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    let obs = ObservedData::read(&dir.path().join("a.csv")).unwrap();
    assert_eq!((obs.ys.nrows(), obs.ys.ncols()), (3, 2));
}

#[test]
fn simulate_rejects_bad_theta() {
    let dir = tempfile::tempdir().unwrap();
    let out = semple(dir.path(), &["simulate", "--task", "two_moons", "--theta", "0,0,0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = semple(dir.path(), &["simulate", "--task", "two_moons", "--theta", "3,0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = semple(dir.path(), &["simulate", "--task", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn single_round_run_writes_one_sample_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--task", "two_moons", "--theta", "0.2,-0.1", "--out", "obs.csv"]);
    fs::write(p.join("cfg.txt"), SMALL_RUN).unwrap();
    ok(p, &["run", "--task", "two_moons", "--observed", "obs.csv", "--config", "cfg.txt", "--out", "run"]);
    let mut files: Vec<_> = fs::read_dir(p.join("run"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["manifest.json", "round_1_samples.csv"]);
    let samples = read_samples(&p.join("run/round_1_samples.csv")).unwrap();
    assert_eq!(samples.shape(), (300, 2));

    let manifest = RunManifest::read(&p.join("run/manifest.json")).unwrap();
    assert_eq!(manifest.rounds.len(), 1);
    assert_eq!(manifest.rounds[0].acceptance_rate, 1.0);
    assert_eq!(manifest.config.n_per_round, 300);
    assert_eq!(RunManifest::from_json(&manifest.to_json()).unwrap(), manifest);
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--task", "two_moons", "--theta", "0,0", "--out", "obs.csv"]);
    fs::write(p.join("cfg.txt"), "semple.R = 1\nsemple.bogus = 3\n").unwrap();
    let out = semple(p, &["run", "--task", "two_moons", "--observed", "obs.csv", "--config", "cfg.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("semple.bogus"), "{err}");
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--task", "two_moons", "--theta", "0.2,-0.1", "--out", "obs.csv"]);
    fs::write(p.join("cfg.txt"), "semple.R = 2\nsemple.N = 300\nsemple.K0 = 4\n").unwrap();
    for out in ["r1", "r2"] {
        ok(p, &["--deterministic", "run", "--task", "two_moons", "--observed", "obs.csv", "--config", "cfg.txt", "--out", out]);
    }
    for name in ["manifest.json", "round_1_samples.csv", "round_2_samples.csv"] {
        let a = fs::read(p.join("r1").join(name)).unwrap();
        assert_eq!(a, fs::read(p.join("r2").join(name)).unwrap(), "{name}");
    }
    let manifest = RunManifest::read(&p.join("r1/manifest.json")).unwrap();
    assert!(manifest.deterministic);
    assert!(manifest.rounds.iter().all(|r| r.wall_time.is_none()));
}

#[test]
fn reference_needs_an_exact_likelihood() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--task", "two_moons", "--theta", "0.1,0.2", "--out", "tm.csv"]);
    let out = semple(p, &["reference", "--task", "lotka_volterra", "--observed", "tm.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reference_and_metrics_append_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--task", "two_moons", "--theta", "0.3,0.3", "--out", "obs.csv"]);
    ok(p, &["reference", "--task", "two_moons", "--observed", "obs.csv", "--n", "600", "--out", "ref_a.csv"]);
    ok(p, &["reference", "--task", "two_moons", "--observed", "obs.csv", "--n", "600", "--seed", "1", "--out", "ref_b.csv"]);
    fs::write(p.join("cfg.txt"), SMALL_RUN).unwrap();
    ok(p, &["run", "--task", "two_moons", "--observed", "obs.csv", "--config", "cfg.txt", "--out", "run"]);

    let stdout = ok(p, &["metrics", "--samples", "ref_a.csv", "--reference", "ref_b.csv", "--out", "m.csv"]);
    assert!(stdout.contains("c2st=") && stdout.contains("w2="));
    ok(p, &[
        "metrics", "--samples", "run/round_1_samples.csv", "--reference", "ref_b.csv", "--which", "c2st",
        "--out", "m.csv", "--manifest", "run/manifest.json", "--round", "1",
    ]);
    let rows = metric_rows_from_csv(&fs::read_to_string(p.join("m.csv")).unwrap(), "m.csv").unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2].run_id, "two_moons-0");
    assert_eq!(rows[2].round, 1);
    // Two independent reference samples are hard to tell apart.
    let c2st = rows.iter().find(|r| r.metric == "c2st").unwrap().value;
    assert!(c2st < 0.6, "{c2st}");

    let manifest = RunManifest::read(&p.join("run/manifest.json")).unwrap();
    assert_eq!(manifest.metrics.len(), 1);
    assert_eq!(manifest.metrics[0].value, rows[2].value);
}

#[test]
fn bic_single_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["bic", "--task", "two_moons", "--n", "300", "--grid", "1", "--out", "b.csv"]);
    assert!(stdout.contains("best_k=1"));
    let table = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(table.starts_with("k,bic\n1,"));
}

#[test]
fn bic_on_a_linear_task_prefers_few_components() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["bic", "--task", "linear_gaussian", "--n", "2000", "--grid", "1,2,4"]);
    let k: usize = stdout.trim().strip_prefix("best_k=").unwrap().parse().unwrap();
    assert!(k <= 2, "{k}");
}

#[test]
fn help_and_usage_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(semple(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(semple(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(semple(dir.path(), &["bic", "--task", "two_moons"]).status.code(), Some(1));
}
