//! End-to-end runs of the `pathloss` binary on the bundled toy world.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pathloss");

fn toy_manifest() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy/manifest.cfg")
}

fn pathloss(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("PATHLOSS_SEED")
        .output()
        .expect("binary runs")
}

fn run_ok(out: &Path, args: &[&str]) {
    let cfg = toy_manifest();
    let mut full = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    full.extend_from_slice(args);
    let o = pathloss(&full);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

/// Every output file except the run metadata, which carries timings.
fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run_metadata.txt" {
                files.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn metadata(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(dir.join("run_metadata.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn stderr_line(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stderr).to_string();
    assert_eq!(s.trim_end().lines().count(), 1, "expected one error line, got {s:?}");
    s.trim_end().to_string()
}

#[test]
fn matrix_is_byte_identical_across_runs_and_job_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_ok(a.path(), &["matrix", "--mode", "ensemble", "--seed", "7"]);
    run_ok(b.path(), &["matrix", "--mode", "ensemble", "--seed", "7", "--jobs", "1"]);
    let (oa, ob) = (outputs(a.path()), outputs(b.path()));
    assert!(oa.contains_key("matrix_ensemble.csv"));
    assert!(oa.contains_key("heatmap_ensemble_mae.csv"));
    assert_eq!(oa, ob);
    let meta = metadata(a.path());
    assert_eq!(meta["seed"], "7");
    assert_eq!(meta["config_hash"].len(), 64);
    assert!(meta.contains_key("time.total_s"));

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/matrix_ensemble_seed7.csv");
    let got = &oa["matrix_ensemble.csv"];
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, got).unwrap();
    }
    assert_eq!(String::from_utf8_lossy(got), std::fs::read_to_string(&golden).unwrap());
}

#[test]
fn evaluate_writes_one_row_per_test_env() {
    let d = tempfile::tempdir().unwrap();
    run_ok(d.path(), &["evaluate", "--scenario", "5pct_real_smote_sim", "--test-env", "hilly", "--seed", "3"]);
    let text = std::fs::read_to_string(d.path().join("results_5pct_real_smote_sim.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("5% Real + SMOTE + SIM,hilly,hilly,"));
}

#[test]
fn baseline_report_has_tilt_and_objective_table() {
    let d = tempfile::tempdir().unwrap();
    run_ok(d.path(), &["baseline", "--env", "flat"]);
    let text = std::fs::read_to_string(d.path().join("baselines_flat.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("bs_id,theta_est_deg,"));
    assert!(header.contains("mae_theta_0"));
    assert_eq!(text.lines().count(), 3);
    assert!(!d.path().join("baselines_hilly.csv").exists());
}

#[test]
fn pipeline_stages_write_their_tables() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        &["ingest"][..],
        &["features", "--env", "flat"],
        &["simulate", "--env", "flat"],
        &["augment", "--env", "flat"],
        &["train", "--env", "flat", "--source", "synthetic"],
        &["ensemble", "--env", "flat"],
    ] {
        run_ok(d.path(), args);
    }
    for f in [
        "ingest.csv",
        "features_flat.csv",
        "synthetic_flat.csv",
        "smote_flat.csv",
        "model_flat_synthetic.model",
        "history_flat_synthetic.csv",
        "ensemble_flat/ensemble.cfg",
        "ensemble_flat/m_combined.model",
        "ensemble_summary.csv",
    ] {
        assert!(d.path().join(f).is_file(), "missing {f}");
    }
    let ingest = std::fs::read_to_string(d.path().join("ingest.csv")).unwrap();
    assert_eq!(ingest.lines().count(), 3);
}

#[test]
fn seed_precedence() {
    let d = tempfile::tempdir().unwrap();
    let cfg = toy_manifest();
    let base = ["--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap(), "ingest"];
    let o = Command::new(BIN).args(base).env("PATHLOSS_SEED", "99").output().unwrap();
    assert!(o.status.success());
    assert_eq!(metadata(d.path())["seed"], "99");
    let o = Command::new(BIN).args(base).arg("--seed").arg("5").env("PATHLOSS_SEED", "99").output().unwrap();
    assert!(o.status.success());
    assert_eq!(metadata(d.path())["seed"], "5");
    let o = pathloss(&base);
    assert!(o.status.success());
    assert_eq!(metadata(d.path())["seed"], "2024");
}

#[test]
fn config_errors_exit_2() {
    let o = pathloss(&["matrix", "--colour", "red"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).starts_with("ConfigError: "));

    let cfg = toy_manifest();
    let d = tempfile::tempdir().unwrap();
    let o = pathloss(&["--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap(), "matrix", "--mode", "both"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).starts_with("ConfigError: "));

    let o = pathloss(&[
        "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap(), "evaluate", "--scenario", "everything",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let copy = copy_toy();
    let bad = copy.path().join("manifest.cfg");
    let text = std::fs::read_to_string(&bad).unwrap();
    std::fs::write(&bad, text.replace("= measurements.csv", "= nowhere.csv")).unwrap();
    let o = pathloss(&["--config", bad.to_str().unwrap(), "--out", d.path().to_str().unwrap(), "ingest"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).contains("nowhere.csv does not exist"));

    std::fs::write(&bad, format!("{text}sim.spaceing = 10\n")).unwrap();
    let o = pathloss(&["--config", bad.to_str().unwrap(), "--out", d.path().to_str().unwrap(), "ingest"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).contains("unknown key"));
}

/// A writable copy of the bundled toy world.
fn copy_toy() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    let src = toy_manifest();
    for f in std::fs::read_dir(src.parent().unwrap()).unwrap() {
        let p = f.unwrap().path();
        std::fs::copy(&p, d.path().join(p.file_name().unwrap())).unwrap();
    }
    d
}

#[test]
fn data_errors_exit_3() {
    let d = copy_toy();
    let m = d.path().join("measurements.csv");
    let text = std::fs::read_to_string(&m).unwrap();
    std::fs::write(&m, text.replacen(",flat-bs1,flat,", ",flat-bs9,flat,", 1)).unwrap();
    let cfg = d.path().join("manifest.cfg");
    let out = d.path().join("out");
    let o = pathloss(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "ingest"]);
    assert_eq!(o.status.code(), Some(3));
    let line = stderr_line(&o);
    assert!(line.starts_with("DataError: ") && line.contains("flat-bs9"), "{line}");
}

#[test]
fn help_lists_every_flag() {
    let o = pathloss(&["--help"]);
    assert!(o.status.success());
    let help = String::from_utf8_lossy(&o.stdout);
    for flag in ["--config", "--seed", "--out", "--jobs"] {
        assert!(help.contains(flag), "{flag}");
    }
    for sub in ["ingest", "baseline", "features", "simulate", "augment", "train", "ensemble", "evaluate", "matrix"] {
        assert!(help.contains(sub), "{sub}");
    }
    let o = pathloss(&["evaluate", "--help"]);
    let help = String::from_utf8_lossy(&o.stdout);
    for flag in ["--scenario", "--test-env", "--config", "--seed", "--out", "--jobs"] {
        assert!(help.contains(flag), "{flag}");
    }
}
