use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use entroproj::cli::run;

const SMALL: &str = r#"
[grid]
x_min = -8.0
x_max = 8.0
nx = 120
T = 1.0
nt = 24

[coefficients]
drift = "1"
sigma = "1"

[constraint]
kind = "linear"
psi = "x"
offset = 0.0

[initial]
init_kind = "gaussian"
mean = 0.0
variance = 1.0
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn invoke(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args: Vec<String> = vec!["entroproj".into(), sub.into(), "--config".into(), config.display().to_string(), "--out-dir".into(), out.display().to_string()];
    args.extend(extra.iter().map(|s| s.to_string()));
    run(args)
}

#[test]
fn solve_writes_all_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "drift.toml", SMALL);
    let out = dir.path().join("out");
    assert_eq!(invoke("solve", &cfg, &out, &[]), 0);
    for f in ["flow.csv", "value.csv", "multiplier.csv", "multiplier_atoms.csv", "trace.csv", "report.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    for p in manifest["outputs"].as_array().unwrap() {
        assert!(Path::new(p.as_str().unwrap()).exists());
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["converged"].as_bool().unwrap());
    assert!((report["optimal_value"].as_f64().unwrap() - 0.25).abs() < 0.02);
}

#[test]
fn identical_runs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "drift.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_eq!(invoke("solve", &cfg, out, &[]), 0);
        assert_eq!(invoke("particles", &cfg, &out.join("p"), &["--paths", "200", "--seed", "7"]), 0);
    }
    for f in ["flow.csv", "value.csv", "multiplier.csv", "trace.csv", "report.json", "p/ensemble.csv", "p/particles.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn diagnose_reads_a_previous_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "drift.toml", SMALL);
    let run_dir = dir.path().join("run");
    assert_eq!(invoke("solve", &cfg, &run_dir, &[]), 0);
    let out = dir.path().join("diag");
    assert_eq!(invoke("diagnose", &cfg, &out, &["--run-dir", run_dir.to_str().unwrap()]), 0);
    let text = fs::read_to_string(out.join("log_density.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 25);
    assert!(out.join("bounds.json").exists());
}

#[test]
fn oracle_and_sweep_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "drift.toml", SMALL);
    let out = dir.path().join("oracle");
    assert_eq!(invoke("oracle", &cfg, &out, &["--oracle-window", "-4,4"]), 0);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    assert!(summary["relative_difference"].as_f64().unwrap() < 0.05);

    let out = dir.path().join("sweep");
    assert_eq!(invoke("sweep", &cfg, &out, &["--epsilon-list", "0.1,0.05,0.025"]), 0);
    assert_eq!(fs::read_to_string(out.join("stability.csv")).unwrap().lines().count(), 4);
    assert!(out.join("stability.gp").exists());
    assert!(out.join("stability_summary.json").exists());
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let zero_sigma = write_config(dir.path(), "zero_sigma.toml", &SMALL.replace("sigma = \"1\"", "sigma = \"0\""));
    assert_eq!(invoke("solve", &zero_sigma, &out, &[]), 2);

    let bad_syntax = write_config(dir.path(), "bad.toml", "[grid]\nx_min = = 1\n");
    assert_eq!(invoke("solve", &bad_syntax, &out, &[]), 3);

    let unknown = write_config(dir.path(), "unknown.toml", &SMALL.replace("sigma = \"1\"", "sigma = \"1\"\nsigmaa = 2"));
    assert_eq!(invoke("solve", &unknown, &out, &[]), 3);

    assert_eq!(invoke("solve", &dir.path().join("missing.toml"), &out, &[]), 3);

    let ok = write_config(dir.path(), "ok.toml", SMALL);
    let starved = SMALL.to_string() + "\n[solver]\nmax_outer = 1\ntol_primal = 0.0\ntol_slack = 0.0\n";
    let starved = write_config(dir.path(), "starved.toml", &starved);
    assert_eq!(invoke("solve", &starved, &out, &[]), 1);

    assert_eq!(invoke("sweep", &ok, &out, &["--epsilon-list", "0.1,-1"]), 3);
    assert_eq!(run(["entroproj".to_string(), "frobnicate".to_string()]), 3);
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn binary_reports_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero_sigma.toml", &SMALL.replace("sigma = \"1\"", "sigma = \"0\""));
    let status = Command::new(env!("CARGO_BIN_EXE_entroproj"))
        .args(["solve", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("error"));
}
