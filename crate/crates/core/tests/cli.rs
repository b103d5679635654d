//! End-to-end exercises of the `adalab` binary: exit codes, output files,
//! environment overrides, and the report flow.

use std::path::Path;
use std::process::{Command, Output};

fn adalab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adalab"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn small_config(out_dir: &Path) -> String {
    format!(
        r#"
schema_version = 1

[objective]
kind = "quadratic"
dim = 4
eig_range = [1.0, 4.0]

[oracle]
kind = "additive_gaussian"
sigma = 1.0

[optimizer]
kind = "adagrad_norm"

[run]
t = 200
horizons = [20, 200]
seeds = 3
base_seed = 9
theta_init = 2.0
record_stride = 20
output_dir = {:?}
delta0 = 2.0

[check]
fd_points = 10
smoothness_pairs = 500
affine_draws = 1000
near_critical_draws = 200
bound_samples = 100
unbiased_points = 1
unbiased_draws = 2000
"#,
        out_dir.to_str().unwrap()
    )
}

#[test]
fn version_verb() {
    let out = adalab(&["version"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("adalab "), "{text}");
}

#[test]
fn config_parse_error_exits_2_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "schema_version = 1\n[objective]\nkind = \"quadratic\"\ndim = \"ten\"\n",
    )
    .unwrap();
    let out = adalab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("parse error"), "{err}");
}

#[test]
fn missing_config_exits_3() {
    let out = adalab(&["run", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_outputs_and_report_aggregates_them() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, small_config(&out_dir)).unwrap();

    let out = adalab(&["run", cfg.to_str().unwrap(), "--quiet"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty(), "--quiet must silence stdout");
    for f in [
        "manifest.json",
        "seed_0000.csv",
        "seed_0001.csv",
        "seed_0002.csv",
        "run.log",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }

    let out = adalab(&["report", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ABRT PASS"), "{text}");
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("table.csv").exists());
}

#[test]
fn report_on_missing_directory_exits_3() {
    let out = adalab(&["report", "/nonexistent/run-dir"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn report_names_deleted_seed_and_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, small_config(&out_dir)).unwrap();
    assert!(adalab(&["run", cfg.to_str().unwrap(), "--quiet"])
        .status
        .success());
    std::fs::remove_file(out_dir.join("seed_0002.csv")).unwrap();
    let out = adalab(&["report", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("seed 2"), "{err}");
}

#[test]
fn env_var_overrides_output_dir_and_is_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let configured = tmp.path().join("configured");
    let overridden = tmp.path().join("overridden");
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, small_config(&configured)).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_adalab"))
        .args(["run", cfg.to_str().unwrap(), "--quiet"])
        .env("ADALAB_OUTPUT_DIR", overridden.to_str().unwrap())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(overridden.join("manifest.json").exists());
    assert!(!configured.exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(overridden.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(
        manifest["output_dir_env_override"].as_str().unwrap(),
        overridden.to_str().unwrap()
    );
}

#[test]
fn check_verb_passes_on_shipped_pair_and_writes_certification() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, small_config(&out_dir)).unwrap();
    let out = adalab(&["check", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("overall            PASS"), "{text}");
    assert!(out_dir.join("certification.json").exists());
}

#[test]
fn report_on_rmsprop_run_evaluates_schedule_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg_text = small_config(&out_dir).replace(
        "kind = \"adagrad_norm\"",
        "kind = \"rmsprop\"\nbeta1 = 0.9\neps = 1e-8\nv_init = 1e-6",
    );
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, cfg_text).unwrap();
    assert!(adalab(&["run", cfg.to_str().unwrap(), "--quiet"])
        .status
        .success());
    let out = adalab(&["report", out_dir.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("A7   PASS"), "{text}");
    assert!(text.contains("A8"), "{text}");
}

#[test]
fn manifest_echo_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, small_config(&out_dir)).unwrap();
    assert!(adalab(&["run", cfg.to_str().unwrap(), "--quiet"])
        .status
        .success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    // re-run from the echoed config bytes into a fresh directory
    let echoed = manifest["config_text"].as_str().unwrap();
    let replay_dir = tmp.path().join("replay");
    let replay_cfg = tmp.path().join("replay.toml");
    std::fs::write(&replay_cfg, echoed).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_adalab"))
        .args(["run", replay_cfg.to_str().unwrap(), "--quiet"])
        .env("ADALAB_OUTPUT_DIR", replay_dir.to_str().unwrap())
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["seed_0000.csv", "seed_0001.csv", "seed_0002.csv"] {
        assert_eq!(
            std::fs::read(out_dir.join(f)).unwrap(),
            std::fs::read(replay_dir.join(f)).unwrap(),
            "replay differs in {f}"
        );
    }
}

#[test]
fn verdict_failure_exits_1() {
    // a desk-scale run whose average-gradient decay fit sits outside the
    // accepted band (transient-dominated horizons)
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg_text = small_config(&out_dir)
        .replace("t = 200", "t = 10000")
        .replace("horizons = [20, 200]", "horizons = [100, 1000, 10000]")
        .replace("seeds = 3", "seeds = 60")
        .replace("record_stride = 20", "record_stride = 1000")
        .replace("theta_init = 2.0", "theta_init = 5.0");
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, cfg_text).unwrap();
    assert!(adalab(&["run", cfg.to_str().unwrap(), "--quiet"])
        .status
        .success());
    let out = adalab(&["report", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("A2   FAIL"), "{text}");
}
