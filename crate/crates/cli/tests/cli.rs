use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use drip_cli::report::{parse_records, parse_sweep_records, read_stamp};

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml")
}

fn drip(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drip"))
        .arg("--config")
        .arg(config())
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("DRIP_OUT_DIR")
        .output()
        .expect("spawn drip")
}

fn ok(out: &Path, args: &[&str]) {
    let o = drip(out, args);
    assert!(
        o.status.success(),
        "drip {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

const PIPELINE: [&str; 5] = ["gen-synthetic", "split", "train-encoders", "train-drip", "evaluate"];

fn pipeline(out: &Path) {
    for stage in PIPELINE {
        ok(out, &[stage]);
    }
}

#[test]
fn full_tiny_pipeline_emits_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    pipeline(dir.path());
    assert!(start.elapsed() < Duration::from_secs(300));
    let text = std::fs::read_to_string(dir.path().join("metrics.tsv")).unwrap();
    let report = parse_records(&text).unwrap();
    assert!(report.mt.users > 0);
    let r20 = report.mt.recall_at(20).unwrap();
    assert!((0.0..=1.0).contains(&r20));
    for name in ["metrics.txt", "recommendations.tsv", "train_log.tsv", "split.json", "drip.ckpt"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn every_text_artifact_carries_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let mut hashes = Vec::new();
    for name in ["interactions.tsv", "dataset.tsv", "train_log.tsv", "metrics.tsv", "metrics.txt", "recommendations.tsv"] {
        let stamp = read_stamp(&std::fs::read_to_string(dir.path().join(name)).unwrap());
        assert_eq!(stamp[1], ("seed".to_string(), "7".to_string()), "{name}");
        hashes.push(stamp[0].1.clone());
    }
    let split = std::fs::read_to_string(dir.path().join("split.json")).unwrap();
    assert!(split.contains(&hashes[0]));
    for name in ["drip.ckpt", "encoders/domain_0.ckpt"] {
        let bytes = std::fs::read(dir.path().join(name)).unwrap();
        assert!(bytes.windows(64).any(|w| w == hashes[0].as_bytes()), "{name}");
    }
    assert!(hashes.iter().all(|h| h == &hashes[0] && h.len() == 64));
}

#[test]
fn evaluate_before_training_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-synthetic"]);
    ok(dir.path(), &["split"]);
    ok(dir.path(), &["train-encoders"]);
    let o = drip(dir.path(), &["evaluate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-drip"));
}

#[test]
fn split_before_generation_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(drip(dir.path(), &["split"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(drip(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(drip(dir.path(), &["--set", "nonsense=1", "gen-synthetic"]).status.code(), Some(2));
    assert_eq!(drip(dir.path(), &["ablate", "--variant", "mmoe"]).status.code(), Some(2));
    // no config file means no seed
    let o = Command::new(env!("CARGO_BIN_EXE_drip"))
        .arg("--out")
        .arg(dir.path())
        .arg("gen-synthetic")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn output_dir_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (env_out, flag_out) = (dir.path().join("env"), dir.path().join("flag"));
    let run = |flag: Option<&Path>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_drip"));
        c.arg("--config").arg(config()).env("DRIP_OUT_DIR", &env_out);
        if let Some(f) = flag {
            c.arg("--out").arg(f);
        }
        c.arg("gen-synthetic").output().unwrap()
    };
    assert!(run(None).status.success());
    assert!(env_out.join("interactions.tsv").exists());
    assert!(run(Some(&flag_out)).status.success());
    assert!(flag_out.join("interactions.tsv").exists());
}

#[test]
fn same_config_reproduces_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&a);
    pipeline(&b);
    for name in ["split.json", "dataset.tsv", "encoders/domain_1.ckpt", "drip.ckpt", "metrics.tsv", "recommendations.tsv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&a, &["gen-synthetic"]);
    ok(&b, &["--seed", "8", "gen-synthetic"]);
    let sa = read_stamp(&std::fs::read_to_string(a.join("interactions.tsv")).unwrap());
    let sb = read_stamp(&std::fs::read_to_string(b.join("interactions.tsv")).unwrap());
    assert_ne!(sa[0], sb[0]);
    assert_eq!(sb[1].1, "8");
}

#[test]
fn sweep_emits_one_report_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-synthetic"]);
    let grid = ["0.1", "0.3", "0.5", "0.7", "0.9"];
    ok(dir.path(), &["--set", "epochs=2", "sweep", "--param", "rho", "--grid", &grid.join(",")]);
    let root = dir.path().join("sweep_rho");
    for g in grid {
        let text = std::fs::read_to_string(root.join(g).join("metrics.tsv")).unwrap();
        parse_records(&text).unwrap();
    }
    let table = std::fs::read_to_string(root.join("table.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "rho\tmt.recall@20");
    let axis: Vec<&str> = rows[1..].iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(axis, grid);
    let records = parse_sweep_records(&std::fs::read_to_string(root.join("records.tsv")).unwrap()).unwrap();
    assert_eq!(records.len(), grid.len());
}

#[test]
fn ablation_writes_its_own_report() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    ok(dir.path(), &["ablate", "--variant", "single_domain"]);
    let text = std::fs::read_to_string(dir.path().join("ablate_single_domain/metrics.tsv")).unwrap();
    assert!(parse_records(&text).unwrap().mt.users > 0);
}
