use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn memoqcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memoqcd"))
        .args(args)
        .env_remove("MEMOQCD_THREADS")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = memoqcd(args);
    assert!(
        out.status.success(),
        "memoqcd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_SEARCH: [&str; 12] = [
    "--qubits", "1", "--generations", "2", "--population", "4", "--epochs", "5", "--pairs", "200", "--batch", "16",
];

fn stub(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["qfm-search", "--mode", "memetic", "--seed", seed, "--out", s(&path)];
    args.extend(SMALL_SEARCH);
    ok(&args);
    path
}

fn moons(dir: &Path) -> PathBuf {
    let path = dir.join("moons.csv");
    ok(&["datagen", "--name", "two-moons", "--n", "40", "--seed", "3", "--out", s(&path)]);
    path
}

fn trained(dir: &Path) -> PathBuf {
    let model = stub(dir, "model.json", "0");
    let data = moons(dir);
    ok(&["train", "--model", s(&model), "--data", s(&data), "--layers", "2", "--epochs", "20"]);
    model
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn search_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = stub(dir.path(), "a.json", "7");
    let b = stub(dir.path(), "b.json", "7");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.trace.csv")).unwrap(),
        fs::read(dir.path().join("b.trace.csv")).unwrap()
    );
    let m = json(&a);
    assert!(m["search"]["kernel_mse"].as_f64().unwrap().is_finite());
    assert_eq!(m["qfm"]["kind"], "chromosome");
}

#[test]
fn manifest_lists_outputs_with_hashes() {
    let dir = TempDir::new().unwrap();
    let data = moons(dir.path());
    let manifest = json(&dir.path().join("moons.csv.manifest.json"));
    assert_eq!(manifest["command"], "datagen");
    assert_eq!(manifest["seeds"][0], 3);
    assert_eq!(manifest["config"]["n"], 40);
    let artifact = &manifest["artifacts"][0];
    assert_eq!(artifact["path"], s(&data));
    assert_eq!(artifact["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn datagen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        ok(&["datagen", "--name", "spirals", "--n", "25", "--noise", "0.2", "--seed", "11", "--out", s(p)]);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 25);
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["qfm-search", "--qubits", "0", "--out", s(&out)],
        vec!["qfm-search", "--mode", "annealing", "--out", s(&out)],
        vec!["qfm-search", "--gamma", "-1", "--out", s(&out)],
        vec!["train", "--model", "/nonexistent/stub.json", "--data", "/nonexistent/d.csv"],
        vec!["kld", "--model", s(&out), "--data", s(&out), "--seeds", "0"],
        vec!["datagen", "--name", "nope", "--out", s(&out)],
        vec!["--threads", "0", "datagen", "--name", "circles", "--out", s(&out)],
        vec!["estimate", "--model", s(&out)],
    ];
    for args in cases {
        let o = memoqcd(&args);
        assert_eq!(o.status.code(), Some(2), "memoqcd {args:?}");
    }
}

#[test]
fn untrained_stub_cannot_estimate() {
    let dir = TempDir::new().unwrap();
    let model = stub(dir.path(), "m.json", "1");
    let o = memoqcd(&["estimate", "--model", s(&model), "--point", "0,0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_completes_stub_in_place() {
    let dir = TempDir::new().unwrap();
    let model = trained(dir.path());
    let m = json(&model);
    assert_eq!(m["layout"]["n_a"], 1);
    assert_eq!(m["layout"]["n_layers"], 2);
    assert_eq!(m["train"]["epochs"], 20);
    assert!(m["norm_constant"].as_f64().unwrap() > 0.0);
    assert!(m["scale"].is_object());
    let trace = fs::read_to_string(dir.path().join("model.ll.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("epoch,log_likelihood"));
    assert_eq!(trace.lines().count(), 1 + 21);
    let manifest = json(&dir.path().join("model.json.manifest.json"));
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 2);
}

fn grid_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn grid_export_has_unit_mass() {
    let dir = TempDir::new().unwrap();
    let model = trained(dir.path());
    let csv = dir.path().join("grid.csv");
    ok(&["estimate", "--model", s(&model), "--grid", "30", "--bounds", "-6,6,-6,6", "--out", s(&csv)]);
    let rows = grid_rows(&fs::read_to_string(&csv).unwrap());
    assert_eq!(rows.len(), 900);
    let cell = (12.0 / 30.0) * (12.0 / 30.0);
    let mass: f64 = rows.iter().map(|r| r[2]).sum::<f64>() * cell;
    assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
    assert!(dir.path().join("grid.csv.manifest.json").exists());

    let pgm = dir.path().join("grid.pgm");
    ok(&["estimate", "--model", s(&model), "--grid", "16", "--out", s(&pgm)]);
    let bytes = fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(bytes.len(), b"P5\n16 16\n255\n".len() + 256);
}

fn point_estimate(out: &Output) -> f64 {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let row = text.lines().nth(1).unwrap();
    row.split(',').nth(2).unwrap().parse().unwrap()
}

#[test]
fn shots_within_binomial_band_of_exact() {
    let dir = TempDir::new().unwrap();
    let model = trained(dir.path());
    let exact = point_estimate(&ok(&["estimate", "--model", s(&model), "--point", "0.5,-0.5"]));
    assert!((0.0..=1.0).contains(&exact));
    let shots = 10_000.0;
    let sigma = (exact * (1.0 - exact) / shots).sqrt().max(1.0 / shots);
    for seed in ["1", "2", "3"] {
        let sampled = point_estimate(&ok(&[
            "estimate", "--model", s(&model), "--point", "0.5,-0.5", "--mode", "shots", "--shots", "10000", "--seed", seed,
        ]));
        assert!((sampled - exact).abs() <= 4.0 * sigma, "{sampled} vs {exact}");
    }
}

#[test]
fn point_outside_interval_warns() {
    let dir = TempDir::new().unwrap();
    let model = trained(dir.path());
    let out = ok(&["estimate", "--model", s(&model), "--point", "9,0"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside"));
    let v = point_estimate(&out);
    assert!(v.is_finite() && v >= 0.0);
}

#[test]
fn kld_report_has_summary() {
    let dir = TempDir::new().unwrap();
    let model = trained(dir.path());
    let data = dir.path().join("moons.csv");
    let report = dir.path().join("kld.csv");
    let out = ok(&[
        "kld", "--model", s(&model), "--data", s(&data), "--seeds", "3", "--k", "3", "--out", s(&report),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("over 3 seeds"));
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 + 1);
    let summary = text.lines().last().unwrap();
    assert!(summary.starts_with("# mean=") && summary.contains("std="));
}

#[test]
fn hea_search_writes_hea_stub() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("hea.json");
    ok(&[
        "--threads", "1", "qfm-search", "--mode", "hea", "--qubits", "2", "--epochs", "10", "--pairs", "100", "--out", s(&path),
    ]);
    let m = json(&path);
    assert_eq!(m["qfm"]["kind"], "hea");
    assert_eq!(m["qfm"]["layers"], 1);
    assert_eq!(m["qfm_params"].as_array().unwrap().len(), 8);
    let trace = fs::read_to_string(dir.path().join("hea.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 11);
}
