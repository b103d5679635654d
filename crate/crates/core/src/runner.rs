//! Executes seed ensembles: one deterministic stream per trajectory, telemetry
//! recorded in-loop, per-seed CSVs written by the owning worker, and a
//! manifest assembled after the pool joins. Numeric outputs depend only on
//! (config bytes, base_seed), never on the parallelism degree.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::SeedCheckpoint;
use crate::config::{streams, Delta0Spec, OptimizerSpec, ResolvedExperiment};
use crate::error::{Error, Result};
use crate::manifest::{
    csv_file_name, AbortInfo, RmsPropSeedStats, RunManifest, SeedSummary, StreamMapping, VSnapshot,
    LOG_FILE, MANIFEST_FILE,
};
use crate::numerics::{RngStream, Vector};
use crate::oracles::{
    affine_upper_bound, empirical_affine_fit, probe_points, sample, AffineFit, Oracle,
};
use crate::telemetry::{segment_excursions, LyapunovParams, Recorder, StridePlan};

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Worker count; `None` uses the config's `jobs`, falling back to the
    /// logical core count.
    pub jobs: Option<usize>,
    /// Write CSVs, manifest, and log under the experiment's output dir.
    pub write_outputs: bool,
    pub quiet: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: None,
            write_outputs: true,
            quiet: true,
        }
    }
}

pub struct RunOutput {
    pub manifest: RunManifest,
}

/// Pilot trajectory length used to resolve auto-percentile thresholds.
const PILOT_STEPS: u64 = 10_000;

pub fn run_experiment(exp: &ResolvedExperiment, opts: &RunOptions) -> Result<RunOutput> {
    let started = Instant::now();
    let (oracle, sigma_fit) = resolve_oracle(exp)?;
    let sigma = oracle.declared_constants()?;
    let params = lyapunov_params(exp, sigma);

    let delta0 = match exp.delta0 {
        Delta0Spec::Value(v) => v,
        Delta0Spec::AutoPercentile(p) => {
            let pilot = run_trajectory(
                exp,
                &oracle,
                params,
                streams::PILOT,
                f64::INFINITY,
                exp.t.min(PILOT_STEPS),
            )?;
            let raw = percentile(&pilot.ghat_series, p);
            if raw > 0.0 && raw.is_finite() {
                raw
            } else {
                // a fully converged pilot can have a zero percentile (the
                // iterate reaches the minimizer exactly); any threshold above
                // the typical level set still yields a valid segmentation
                let max = pilot.ghat_series.iter().cloned().fold(0.0f64, f64::max);
                if max > 0.0 {
                    max / 2.0
                } else {
                    1.0
                }
            }
        }
    };

    let jobs = opts.jobs.or(exp.jobs).filter(|&j| j > 0);
    let dir = exp.output_dir.clone();
    if opts.write_outputs {
        fs::create_dir_all(&dir)?;
    }

    let seed_indices: Vec<u64> = (0..exp.seeds).collect();
    let worker = |&seed: &u64| -> Result<SeedSummary> {
        let traj = run_trajectory(exp, &oracle, params, seed, delta0, exp.t)?;
        if opts.write_outputs {
            write_csv(&dir.join(csv_file_name(seed)), &traj)?;
        }
        Ok(summarize(seed, traj))
    };
    let per_seed: Vec<SeedSummary> = match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
            pool.install(|| {
                seed_indices
                    .par_iter()
                    .map(worker)
                    .collect::<Result<Vec<_>>>()
            })?
        }
        None => seed_indices
            .par_iter()
            .map(worker)
            .collect::<Result<Vec<_>>>()?,
    };

    let aborted = per_seed.iter().filter(|s| s.aborted.is_some()).count();
    let manifest = RunManifest {
        schema_version: crate::config::SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_text: exp.config_text.clone(),
        profile: RunManifest::profile_for(exp),
        constants: RunManifest::constants_for(exp, sigma, sigma_fit, delta0),
        guarantees: RunManifest::guarantees_for(
            &exp.objective,
            oracle.near_critical_bounded,
            oracle.coordinatewise_affine,
        ),
        stream_mapping: StreamMapping::default(),
        output_dir_env_override: exp.output_dir_env_override.clone(),
        per_seed,
        aborted_fraction: aborted as f64 / exp.seeds as f64,
    };

    if opts.write_outputs {
        fs::write(dir.join(MANIFEST_FILE), manifest.to_json()?)?;
        // timing is intentionally outside the deterministic outputs
        let mut log = fs::File::create(dir.join(LOG_FILE))?;
        writeln!(
            log,
            "seeds={} t={} jobs={} wall_clock_s={:.3}",
            exp.seeds,
            exp.t,
            jobs.map(|j| j.to_string())
                .unwrap_or_else(|| "default".into()),
            started.elapsed().as_secs_f64()
        )?;
    }
    if !opts.quiet {
        eprintln!(
            "run complete: {} seeds x {} steps in {:.2}s ({} aborted)",
            exp.seeds,
            exp.t,
            started.elapsed().as_secs_f64(),
            aborted
        );
    }
    Ok(RunOutput { manifest })
}

/// Fits mini-batch oracle constants at run start; other oracles pass through.
fn resolve_oracle(exp: &ResolvedExperiment) -> Result<(Oracle, Option<AffineFit>)> {
    let mut oracle = exp.oracle.clone();
    if oracle.declared.is_some() {
        return Ok((oracle, None));
    }
    let mut rng = RngStream::new(exp.base_seed, streams::ORACLE_FIT);
    let probes = probe_points(&exp.objective, exp.check.affine_probes.max(8), 0.5, 50.0)?;
    let fit = empirical_affine_fit(
        &oracle,
        &exp.objective,
        &probes,
        exp.check.affine_draws,
        &mut rng,
    )?;
    oracle.declared = Some(affine_upper_bound(&fit));
    Ok((oracle, Some(fit)))
}

fn lyapunov_params(exp: &ResolvedExperiment, sigma: (f64, f64)) -> LyapunovParams {
    let (sigma0, sigma1) = sigma;
    let l = exp.objective.declared_l();
    match exp.optimizer {
        OptimizerSpec::AdaGradNorm { alpha0, s0 } => LyapunovParams {
            sigma0,
            sigma1,
            alpha0,
            s0,
            l,
        },
        OptimizerSpec::RmsProp { v_init, .. } => LyapunovParams {
            sigma0,
            sigma1,
            alpha0: 1.0,
            s0: v_init,
            l,
        },
        OptimizerSpec::Sgd { .. } => LyapunovParams {
            sigma0,
            sigma1,
            alpha0: 1.0,
            s0: 1.0,
            l,
        },
    }
}

struct TrajectoryResult {
    stream_id: u64,
    rows_csv: Vec<String>,
    checkpoints: Vec<SeedCheckpoint>,
    ghat_series: Vec<f64>,
    excursions: crate::telemetry::ExcursionLog,
    residual: Option<crate::telemetry::ResidualStats>,
    max_adjacency_excess: Option<f64>,
    rmsprop: Option<RmsPropSeedStats>,
    aborted: Option<AbortInfo>,
}

enum StateKind {
    AdaGrad(crate::optimizers::AdaGradNormState),
    RmsProp(crate::optimizers::RmsPropState),
    Sgd(crate::optimizers::SgdState),
}

impl StateKind {
    fn theta(&self) -> &Vector {
        match self {
            StateKind::AdaGrad(s) => &s.theta,
            StateKind::RmsProp(s) => &s.theta,
            StateKind::Sgd(s) => &s.theta,
        }
    }
}

fn run_trajectory(
    exp: &ResolvedExperiment,
    oracle: &Oracle,
    params: LyapunovParams,
    stream_id: u64,
    delta0: f64,
    t_max: u64,
) -> Result<TrajectoryResult> {
    let obj = &exp.objective;
    let mut rng = RngStream::new(exp.base_seed, stream_id);
    let plan = StridePlan {
        stride: exp.record_stride,
        dense_prefix: exp.dense_prefix,
        horizons: exp.horizons.clone(),
        t_final: t_max,
    };
    let mut state = match exp.optimizer {
        OptimizerSpec::AdaGradNorm { .. } => {
            StateKind::AdaGrad(exp.optimizer.make_adagrad(exp.theta_init.clone())?)
        }
        OptimizerSpec::RmsProp { .. } => {
            StateKind::RmsProp(exp.optimizer.make_rmsprop(exp.theta_init.clone())?)
        }
        OptimizerSpec::Sgd { .. } => {
            StateKind::Sgd(exp.optimizer.make_sgd(exp.theta_init.clone())?)
        }
    };
    let mut recorder = match &state {
        StateKind::AdaGrad(_) => Recorder::for_adagrad(params, plan),
        StateKind::RmsProp(s) => Recorder::for_rmsprop(params, plan, s),
        StateKind::Sgd(_) => Recorder::for_sgd(params, plan),
    };
    // RMSProp convergence proxies need the scaling state at half and full
    // horizon in addition to the configured checkpoints.
    let mut v_snapshot_steps: Vec<u64> = if matches!(state, StateKind::RmsProp(_)) {
        let mut v = exp.horizons.clone();
        v.push(t_max / 2);
        v.push(t_max);
        v.retain(|&s| s >= 1 && s <= t_max);
        v.sort_unstable();
        v.dedup();
        v
    } else {
        Vec::new()
    };
    v_snapshot_steps.reverse(); // pop() yields ascending order
    let mut v_snapshots: Vec<VSnapshot> = Vec::new();

    let mut checkpoints = Vec::with_capacity(exp.horizons.len());
    let mut aborted = None;

    for n in 1..=t_max {
        let step_result = (|| -> Result<()> {
            let theta = state.theta();
            let g = obj.eval(theta)?;
            let grad = obj.grad(theta)?;
            let draw = sample(oracle, obj, theta, &mut rng)?;
            let row = match &mut state {
                StateKind::AdaGrad(s) => {
                    let next = crate::optimizers::adagrad_step(s.clone(), &draw)?;
                    let row = recorder.observe_adagrad(g, grad.norm_sq(), s, &next, &draw)?;
                    *s = next;
                    row
                }
                StateKind::RmsProp(s) => {
                    let next = crate::optimizers::rmsprop_step(s.clone(), &draw)?;
                    let row = recorder.observe_rmsprop(g, &grad, s, &next, &draw)?;
                    *s = next;
                    row
                }
                StateKind::Sgd(s) => {
                    let next = crate::optimizers::sgd_step(s.clone(), &draw)?;
                    let row = recorder.observe_sgd(g, grad.norm_sq(), s, &next, &draw)?;
                    *s = next;
                    row
                }
            };
            if exp.horizons.binary_search(&n).is_ok() {
                checkpoints.push(SeedCheckpoint {
                    seed: stream_id,
                    t: n,
                    s_total: row.s,
                    sup_g: recorder.sup_g(),
                    avg_grad_sq: recorder.sum_grad_sq() / n as f64,
                    min_grad_sq: recorder.min_grad_sq(),
                    final_grad_sq: row.grad_sq,
                    invsqrt_partial: recorder.invsqrt_partial(),
                });
            }
            if v_snapshot_steps.last() == Some(&n) {
                v_snapshot_steps.pop();
                if let StateKind::RmsProp(s) = &state {
                    v_snapshots.push(VSnapshot {
                        t: n,
                        v: s.v.as_slice().to_vec(),
                    });
                }
            }
            Ok(())
        })();
        if let Err(e) = step_result {
            aborted = Some(AbortInfo {
                step: n,
                reason: e.to_string(),
            });
            break;
        }
    }

    if aborted.is_none() {
        // close the final decrease residual with the post-run iterate
        if let (StateKind::AdaGrad(_), Ok(gf), Ok(gradf)) =
            (&state, obj.eval(state.theta()), obj.grad(state.theta()))
        {
            recorder.finish(gf, gradf.norm_sq());
        }
    }

    let excursions = if delta0.is_finite() {
        segment_excursions(recorder.ghat_series(), delta0)?
    } else {
        crate::telemetry::ExcursionLog {
            delta0: f64::MAX,
            triples: vec![],
            overshoot_count: 0,
        }
    };
    let residual = match &state {
        StateKind::AdaGrad(_) => Some(recorder.residual_stats()),
        _ => None,
    };
    let max_adjacency_excess = recorder.max_adjacency_excess();
    let rmsprop = recorder.rmsprop_stats().map(|invariants| RmsPropSeedStats {
        invariants,
        v_snapshots: std::mem::take(&mut v_snapshots),
    });
    let rows_csv = recorder.rows().iter().map(|r| r.to_csv_line()).collect();
    Ok(TrajectoryResult {
        stream_id,
        rows_csv,
        checkpoints,
        ghat_series: recorder.ghat_series().to_vec(),
        excursions,
        residual,
        max_adjacency_excess,
        rmsprop,
        aborted,
    })
}

fn summarize(seed: u64, traj: TrajectoryResult) -> SeedSummary {
    SeedSummary {
        seed,
        stream_id: traj.stream_id,
        csv: csv_file_name(seed),
        aborted: traj.aborted,
        checkpoints: traj.checkpoints,
        excursions: traj.excursions,
        decrease_residual: traj.residual,
        max_adjacency_excess: traj.max_adjacency_excess,
        rmsprop: traj.rmsprop,
    }
}

fn write_csv(path: &Path, traj: &TrajectoryResult) -> Result<()> {
    let mut out = String::with_capacity(64 * (traj.rows_csv.len() + 1));
    out.push_str(crate::telemetry::CSV_HEADER);
    out.push('\n');
    for line in &traj.rows_csv {
        out.push_str(line);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Nearest-rank percentile of an unsorted series.
fn percentile(series: &[f64], p: f64) -> f64 {
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}
