//! Post-run reporting: integrity-checks the output tree against its manifest,
//! aggregates per-seed metrics into checkpoint statistics, evaluates the
//! applicable verdicts, and emits a JSON summary plus a flat CSV table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    aggregate, fit_rate, linear_growth_check, Checkpoint, LinearFit, Metric, RateFit,
    SeedCheckpoint,
};
use crate::error::{Error, Result};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::telemetry::{StepRow, CSV_HEADER};
use crate::verdicts::{evaluate_run, CriterionResult};

pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "table.csv";

/// Relative tolerance when cross-checking CSV horizon rows against the
/// manifest's checkpoint metrics.
const CROSS_CHECK_REL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportSummary {
    pub tool_version: String,
    pub profile: crate::manifest::RunProfile,
    pub constants: crate::manifest::ResolvedConstants,
    pub guarantees: crate::manifest::Guarantees,
    pub checkpoints: Vec<Checkpoint>,
    pub linear_growth: Option<LinearFit>,
    pub rate_fit: Option<RateFit>,
    pub verdicts: Vec<CriterionResult>,
}

#[derive(Debug)]
pub struct ReportOutput {
    pub summary: ReportSummary,
    pub all_pass: bool,
}

pub fn generate_report(dir: &Path, quiet: bool) -> Result<ReportOutput> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::MissingOutput(format!("{}: {e}", manifest_path.display())))?;
    let manifest = RunManifest::from_json(&manifest_text)?;

    verify_tree(dir, &manifest)?;

    let rows: Vec<SeedCheckpoint> = manifest
        .per_seed
        .iter()
        .filter(|s| s.aborted.is_none())
        .flat_map(|s| s.checkpoints.iter().cloned())
        .collect();
    let checkpoints = aggregate(&rows, &manifest.profile.horizons)?;

    let linear_growth = linear_growth_check(&checkpoints).ok();
    let rate_fit = fit_rate(&checkpoints, Metric::AvgGradSq, true).ok();
    let verdicts = evaluate_run(&manifest, &checkpoints);
    let all_pass = verdicts.iter().all(|v| v.pass);

    let summary = ReportSummary {
        tool_version: manifest.tool_version.clone(),
        profile: manifest.profile.clone(),
        constants: manifest.constants.clone(),
        guarantees: manifest.guarantees.clone(),
        checkpoints: checkpoints.clone(),
        linear_growth,
        rate_fit,
        verdicts,
    };

    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Domain(format!("summary serialization: {e}")))?;
    json.push('\n');
    fs::write(dir.join(SUMMARY_FILE), json)?;
    fs::write(dir.join(TABLE_FILE), table_csv(&checkpoints))?;

    if !quiet {
        for v in &summary.verdicts {
            println!("{}", v.line());
        }
    }
    Ok(ReportOutput { summary, all_pass })
}

/// Every seed's CSV must exist, parse, and agree with the manifest's exact
/// checkpoint metrics on the horizon rows. All absent seeds are listed in
/// one diagnostic.
fn verify_tree(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let absent: Vec<String> = manifest
        .per_seed
        .iter()
        .filter(|s| !dir.join(&s.csv).exists())
        .map(|s| format!("seed {} ({})", s.seed, s.csv))
        .collect();
    if !absent.is_empty() {
        return Err(Error::MissingOutput(format!(
            "missing trajectory outputs: {}",
            absent.join(", ")
        )));
    }
    for seed in &manifest.per_seed {
        let path = dir.join(&seed.csv);
        let text = fs::read_to_string(&path).map_err(|_| {
            Error::MissingOutput(format!(
                "seed {} output missing: {}",
                seed.seed,
                path.display()
            ))
        })?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == CSV_HEADER => {}
            other => {
                return Err(Error::Domain(format!(
                    "seed {}: bad CSV header {:?}",
                    seed.seed, other
                )))
            }
        }
        let mut horizon_rows: Vec<StepRow> = Vec::new();
        for line in lines {
            let row = StepRow::parse_csv_line(line)?;
            if manifest.profile.horizons.binary_search(&row.n).is_ok() {
                horizon_rows.push(row);
            }
        }
        for ck in &seed.checkpoints {
            let Some(row) = horizon_rows.iter().find(|r| r.n == ck.t) else {
                return Err(Error::Domain(format!(
                    "seed {}: horizon row {} absent from {}",
                    seed.seed,
                    ck.t,
                    path.display()
                )));
            };
            let close = |a: f64, b: f64| (a - b).abs() <= CROSS_CHECK_REL * a.abs().max(b.abs());
            if !close(row.s, ck.s_total)
                || !close(row.invsqrt_s_partial, ck.invsqrt_partial)
                || !close(row.running_sup_g, ck.sup_g)
                || !close(row.grad_sq, ck.final_grad_sq)
            {
                return Err(Error::Domain(format!(
                    "seed {}: CSV row {} disagrees with manifest checkpoint",
                    seed.seed, ck.t
                )));
            }
        }
    }
    Ok(())
}

fn table_csv(checkpoints: &[Checkpoint]) -> String {
    let mut out = String::from("t,metric,mean,sd,se,q50,q75,q90,q95\n");
    for ck in checkpoints {
        for m in Metric::ALL {
            let s = ck.metric(m);
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let q = |i: usize| s.quantiles[i].1;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                ck.t,
                m.name(),
                s.mean,
                opt(s.sd),
                opt(s.se),
                q(0),
                q(1),
                q(2),
                q(3)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::runner::{run_experiment, RunOptions};

    fn run_to_dir(dir: &Path) -> RunManifest {
        let cfg = format!(
            r#"
schema_version = 1

[objective]
kind = "quadratic"
dim = 3
eig_range = [1.0, 4.0]

[oracle]
kind = "additive_gaussian"
sigma = 1.0

[optimizer]
kind = "adagrad_norm"

[run]
t = 50
horizons = [10, 50]
seeds = 3
base_seed = 5
theta_init = 2.0
record_stride = 5
output_dir = {dir:?}
delta0 = 4.0
"#,
            dir = dir.to_str().unwrap()
        );
        let exp = parse_config(&cfg).unwrap();
        run_experiment(
            &exp,
            &RunOptions {
                jobs: Some(1),
                write_outputs: true,
                quiet: true,
            },
        )
        .unwrap()
        .manifest
    }

    #[test]
    fn report_runs_and_cross_checks() {
        let tmp = tempfile::tempdir().unwrap();
        run_to_dir(tmp.path());
        let out = generate_report(tmp.path(), true).unwrap();
        assert!(tmp.path().join(SUMMARY_FILE).exists());
        assert!(tmp.path().join(TABLE_FILE).exists());
        // too few horizons/decades for rate verdicts; abort budget applies
        assert!(out
            .summary
            .verdicts
            .iter()
            .any(|v| v.id == "ABRT" && v.pass));
    }

    #[test]
    fn missing_seed_csv_is_reported_with_its_index() {
        let tmp = tempfile::tempdir().unwrap();
        run_to_dir(tmp.path());
        std::fs::remove_file(tmp.path().join("seed_0001.csv")).unwrap();
        let err = generate_report(tmp.path(), true).unwrap_err();
        assert!(matches!(err, Error::MissingOutput(_)));
        assert!(err.to_string().contains("seed 1"), "{err}");
    }

    #[test]
    fn tampered_csv_fails_cross_check() {
        let tmp = tempfile::tempdir().unwrap();
        run_to_dir(tmp.path());
        let p = tmp.path().join("seed_0000.csv");
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        // corrupt the final horizon row's S field
        let idx = lines.iter().position(|l| l.starts_with("50,")).unwrap();
        let mut parts: Vec<&str> = lines[idx].split(',').collect();
        let bumped = format!("{}", parts[4].parse::<f64>().unwrap() * 1.5);
        parts[4] = &bumped;
        lines[idx] = parts.join(",");
        std::fs::write(&p, lines.join("\n") + "\n").unwrap();
        let err = generate_report(tmp.path(), true).unwrap_err();
        assert!(err.to_string().contains("disagrees"), "{err}");
    }
}
