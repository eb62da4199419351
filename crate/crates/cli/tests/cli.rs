use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
[grid]
d = 2
n_transverse = 8
l_z = 20.0
n_z = 128

[time]
t_end = 1.0
dt = 0.01

[init]
c0 = 0.1
epsilon = 0.02
";

fn kinkflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinkflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut args = vec!["run", "--config", path(&cfg), "--out", path(&out)];
    args.extend_from_slice(extra);
    kinkflow(&args)
}

fn rows(csv: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(csv).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = kinkflow(&["run", "--config", path(&missing), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = small_run(dir.path(), SMALL, &["--set", "init.colour=3"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn unperturbed_kink_stays_put() {
    let dir = TempDir::new().unwrap();
    let cfg = SMALL.replace("c0 = 0.1", "c0 = 0.0").replace("epsilon = 0.02", "epsilon = 0.0");
    let o = small_run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = rows(&dir.path().join("out/diagnostics.csv"));
    assert!(data.len() > 10);
    for row in &data {
        assert_eq!(row.len(), 14);
        assert!(row[1..].iter().all(|v| v.abs() <= 1e-14), "{row:?}");
    }
}

#[test]
fn runs_are_deterministic_and_reproducible_from_the_manifest() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert!(small_run(a.path(), SMALL, &["--seed", "7"]).status.success());
    assert!(small_run(b.path(), SMALL, &["--seed", "7"]).status.success());
    let first = fs::read(a.path().join("out/diagnostics.csv")).unwrap();
    assert_eq!(first, fs::read(b.path().join("out/diagnostics.csv")).unwrap());

    let manifest = a.path().join("out/run-manifest.json");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["status"], "completed");
    assert_eq!(m["config"]["init"]["seed"], 7);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);

    let again = a.path().join("again");
    let o = kinkflow(&["run", "--config", path(&manifest), "--out", path(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, fs::read(again.join("diagnostics.csv")).unwrap());
    let m2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(again.join("run-manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_hash"], m2["config_hash"]);
}

#[test]
fn energy_never_increases_in_a_small_run() {
    let dir = TempDir::new().unwrap();
    assert!(small_run(dir.path(), SMALL, &[]).status.success());
    let data = rows(&dir.path().join("out/diagnostics.csv"));
    assert!(data.windows(2).all(|w| w[1][1] <= w[0][1]));
    let balance = rows(&dir.path().join("out/balance.csv"));
    assert!(!balance.is_empty());
    assert!(balance.iter().all(|r| r[6] <= 1.0));
}

fn synthetic_csv(dir: &Path) -> std::path::PathBuf {
    let csv = dir.join("diagnostics.csv");
    let mut w = csv::Writer::from_path(&csv).unwrap();
    w.write_record([
        "t", "energy_gap", "dissipation", "hminus1_sq", "shift", "f_l2", "f_grad_l2", "f_sup",
        "gn_ratio", "mass", "alg_ratio_c", "alg_ratio_E", "f0_l2", "f0_grad_l2",
    ])
    .unwrap();
    for k in 0..=60 {
        let t = 10f64.powf(k as f64 / 20.0);
        let row = [
            t,
            2.0 / t,
            3.0 / (t * t),
            1.0,
            t.powf(-0.25),
            t.powf(-0.5),
            t.powf(-0.5),
            0.1 / t,
            0.0,
            0.0,
            0.0,
            0.0,
            t.powf(-0.25),
            t.powf(-0.25),
        ];
        w.write_record(row.map(|v| format!("{v:e}"))).unwrap();
    }
    w.flush().unwrap();
    csv
}

#[test]
fn analyze_recovers_synthetic_rates() {
    let dir = TempDir::new().unwrap();
    let csv = synthetic_csv(dir.path());
    let o = kinkflow(&["analyze", path(&csv), "--window", "1:1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rates.json")).unwrap()).unwrap();
    let slope = |name: &str| report["fits"][name]["slope"].as_f64().unwrap();
    assert!((slope("energy_gap") + 1.0).abs() < 1e-9);
    assert!((slope("dissipation") + 2.0).abs() < 1e-9);
    assert!((slope("fc_h1") + 0.5).abs() < 1e-9);
    assert!((slope("shift_sq") + 0.5).abs() < 1e-9);
    assert!(dir.path().join("plotdata/energy_gap.dat").exists());
}

#[test]
fn analyze_rejects_short_windows() {
    let dir = TempDir::new().unwrap();
    let csv = synthetic_csv(dir.path());
    let o = kinkflow(&["analyze", path(&csv), "--window", "10:50"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn odecheck_sweep_passes() {
    let dir = TempDir::new().unwrap();
    let o = kinkflow(&["odecheck", "--sweep", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ode-report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["runs"].as_array().unwrap().len(), 162);
}

#[test]
fn odecheck_rejects_small_c_star() {
    let dir = TempDir::new().unwrap();
    let o = kinkflow(&["odecheck", "--c-star", "0.5", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn kernel_table() {
    let dir = TempDir::new().unwrap();
    let o = kinkflow(&["kernel", "--t", "0.1,1,10", "--j", "0,1", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = rows(&dir.path().join("kernel-scaling.csv"));
    assert_eq!(data.len(), 6);
    for r in data.iter().filter(|r| r[1] == 0.0) {
        assert!(r[2] >= 1.0 - 1e-9);
    }
}

#[test]
fn kernel_rejects_empty_times() {
    let dir = TempDir::new().unwrap();
    let o = kinkflow(&["kernel", "--t", "", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}
