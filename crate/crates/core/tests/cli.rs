use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use frerec::cli::{RunConfig, RUN_CONFIG_FILE};

fn frerec<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frerec")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = frerec(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, seed: &str, count: &str, artifact: &str) {
    ok(&["gen", "--seed", seed, "--count", count, "--side", "32", "--artifact", artifact, "--out", s(dir)]);
}

fn pgms(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    v.sort();
    v
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(frerec(&["--help"]).status.code(), Some(0));
    assert_eq!(frerec(&["--version"]).status.code(), Some(0));
    assert_eq!(frerec::<&str>(&[]).status.code(), Some(1));
    assert_eq!(frerec(&["nonsense"]).status.code(), Some(1));
    let o = frerec(&["compare", "--real", "/nonexistent"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frerec:"));
}

#[test]
fn gen_writes_images_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("syn");
    gen(&dir, "4", "3", "checkerboard");
    assert_eq!(pgms(&dir).len(), 3);
    let manifest = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("synthetic"));
}

#[test]
fn training_on_synthetic_tagged_images_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = tmp.path().join("syn");
    gen(&syn, "2", "3", "hf-attenuate");
    let o = frerec(&["train", "--real", s(&syn), "--epochs", "1", "--out", s(&tmp.path().join("m"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("synthetic"));
    assert!(!tmp.path().join("m/model.frec").exists());
}

#[test]
fn empty_synthetic_directory_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let (real, empty, out) = (tmp.path().join("real"), tmp.path().join("empty"), tmp.path().join("out"));
    gen(&real, "1", "3", "none");
    std::fs::create_dir_all(&empty).unwrap();
    ok(&["shr", "--real", s(&real), "--synthetic", s(&empty), "--k", "2", "--out", s(&out)]);
    assert!(pgms(&out).is_empty());
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (real, syn) = (tmp.path().join("real"), tmp.path().join("syn"));
    gen(&real, "1", "4", "none");
    gen(&syn, "2", "4", "hf-boost");
    let first = tmp.path().join("first");
    ok(&["shr", "--seed", "9", "--real", s(&real), "--synthetic", s(&syn), "--k", "3", "--ratio", "0.25", "--out", s(&first)]);

    let echoed = first.join(RUN_CONFIG_FILE);
    let cfg: RunConfig = serde_json::from_str(&std::fs::read_to_string(&echoed).unwrap()).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.shr.k, 3);
    assert_eq!(cfg.shr.ratio, 0.25);

    let second = tmp.path().join("second");
    ok(&["shr", "--config", s(&echoed), "--out", s(&second)]);
    let (a, b) = (pgms(&first), pgms(&second));
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

#[test]
fn train_then_recalibrate_with_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let (real, syn) = (tmp.path().join("real"), tmp.path().join("syn"));
    gen(&real, "1", "3", "none");
    gen(&syn, "2", "2", "hf-attenuate");
    let train = tmp.path().join("train");
    let o = ok(&["train", "--seed", "5", "--real", s(&real), "--epochs", "2", "--k", "2", "--out", s(&train)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("epoch 2"));
    let history = std::fs::read_to_string(train.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let rec = tmp.path().join("rec");
    ok(&[
        "recalibrate", "--input", s(&syn), "--real", s(&real), "--model", s(&train.join("model.frec")), "--k", "2",
        "--bench", "--out", s(&rec),
    ]);
    assert_eq!(pgms(&rec).len(), 2);
    let bench: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rec.join("bench.json")).unwrap()).unwrap();
    assert_eq!(bench["images"], 2);
    assert!(bench["mean_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_probe_and_diagnose_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let (real, syn) = (tmp.path().join("real"), tmp.path().join("syn"));
    gen(&real, "1", "8", "none");
    gen(&syn, "2", "8", "hf-attenuate");
    let out = tmp.path().join("out");
    ok(&["compare", "--real", s(&real), "--synthetic", s(&syn), "--svg", "--out", s(&out)]);
    let cmp: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(cmp["k_min"], 8);
    assert!(cmp["distance"].as_f64().unwrap() > 0.0);
    assert!(std::fs::read_to_string(out.join("compare.svg")).unwrap().starts_with("<svg"));

    ok(&["probe", "--real", s(&real), "--synthetic", s(&syn), "--out", s(&out)]);
    let probe: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("probe.json")).unwrap()).unwrap();
    assert!((0.0..=1.0).contains(&probe["accuracy"].as_f64().unwrap()));

    ok(&["diagnose", "--input", s(&real), "--bands", "4,8", "--out", s(&out)]);
    let diag: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("diagnose.json")).unwrap()).unwrap();
    assert_eq!(diag["8"]["histogram_counts"].as_array().unwrap().len(), 64);

    let o = frerec(&["diagnose", "--input", s(&real), "--bands", "16", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}
