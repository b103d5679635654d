//! The bundled verification suite: every quantitative claim the ensemble
//! experiments are expected to reproduce, with its thresholds pinned here and
//! nowhere else. The `report` command and the acceptance test suite both
//! evaluate runs through these functions.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    fit_rate, high_prob_check, linear_growth_check, msc_decay_check, Checkpoint, Metric,
};
use crate::manifest::RunManifest;
use crate::numerics::CompensatedScalar;
use crate::optimizers::rmsprop_schedule;

/// Accepted band for the log-corrected decay exponent of the average squared
/// gradient (the log correction itself shifts a pure `1/sqrt(T)` law to about
/// -0.63 on decade horizons).
pub const RATE_EXPONENT_BAND: (f64, f64) = (-0.7, -0.45);
pub const RATE_R2_MIN: f64 = 0.98;
/// Accumulator growth must be linear with slope within 20% of the additive
/// noise floor `sigma1`.
pub const LINEAR_R2_MIN: f64 = 0.999;
pub const LINEAR_SLOPE_BAND_REL: (f64, f64) = (0.8, 1.2);
/// Running supremum may grow by at most 5% over the last decade.
pub const PLATEAU_MAX_REL_INCREASE: f64 = 0.05;
/// Final-iterate gradient energy must drop below this at the last horizon.
pub const MS_FINAL_THRESHOLD: f64 = 0.05;
/// The inverse-sqrt-accumulator partial sums must grow by at least this
/// factor over the last decade (a linear accumulator gives sqrt(10) ~ 3.16).
pub const STEPSIZE_DIVERGENCE_MIN_RATIO: f64 = 2.5;
pub const HIGH_PROB_DELTAS: [f64; 2] = [0.1, 0.25];
/// Relative tolerance for the RMSProp schedule invariants.
pub const RMSPROP_REL_TOL: f64 = 1e-9;
/// Scaling-state convergence proxy: relative change between half and full
/// horizon, and the fraction of seeds that must satisfy it.
pub const V_CONVERGENCE_REL: f64 = 0.05;
pub const V_CONVERGENCE_SEED_FRACTION: f64 = 0.95;
/// Trajectory-mean decrease residual must not exceed this many standard
/// errors of the residual series.
pub const RESIDUAL_SE_UNITS: f64 = 3.0;
/// Runs with more aborted trajectories than this fraction fail reporting.
pub const MAX_ABORT_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: &str, pass: bool, detail: String) -> Self {
        CriterionResult {
            id: id.into(),
            pass,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{:4} {}  {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// A1: the accumulator mean grows linearly in the horizon with slope near the
/// additive noise floor (fitted on the tail, excluding the smallest horizon
/// when more than three are available).
pub fn a1_linear_accumulator(checkpoints: &[Checkpoint], sigma1: f64) -> CriterionResult {
    let tail: Vec<Checkpoint> = if checkpoints.len() > 3 {
        let min_t = checkpoints.iter().map(|c| c.t).min().unwrap();
        checkpoints
            .iter()
            .filter(|c| c.t != min_t)
            .cloned()
            .collect()
    } else {
        checkpoints.to_vec()
    };
    match linear_growth_check(&tail) {
        Ok(fit) => {
            let (lo, hi) = (
                LINEAR_SLOPE_BAND_REL.0 * sigma1,
                LINEAR_SLOPE_BAND_REL.1 * sigma1,
            );
            let pass = fit.r_squared >= LINEAR_R2_MIN && fit.slope >= lo && fit.slope <= hi;
            CriterionResult::new(
                "A1",
                pass,
                format!(
                    "slope={:.4} (band [{:.2}, {:.2}]), r2={:.6} (min {LINEAR_R2_MIN})",
                    fit.slope, lo, hi, fit.r_squared
                ),
            )
        }
        Err(e) => CriterionResult::new("A1", false, format!("not computable: {e}")),
    }
}

/// A2: log-corrected log-log fit of the mean average-squared-gradient decay.
pub fn a2_decay_rate(checkpoints: &[Checkpoint]) -> CriterionResult {
    match fit_rate(checkpoints, Metric::AvgGradSq, true) {
        Ok(fit) => {
            let pass = fit.exponent_hat >= RATE_EXPONENT_BAND.0
                && fit.exponent_hat <= RATE_EXPONENT_BAND.1
                && fit.r_squared >= RATE_R2_MIN;
            CriterionResult::new(
                "A2",
                pass,
                format!(
                    "exponent={:.4} (band [{}, {}]), r2={:.6} (min {RATE_R2_MIN})",
                    fit.exponent_hat, RATE_EXPONENT_BAND.0, RATE_EXPONENT_BAND.1, fit.r_squared
                ),
            )
        }
        Err(e) => CriterionResult::new("A2", false, format!("not computable: {e}")),
    }
}

/// A3: mean running supremum of the objective grows by less than 5% (plus
/// two paired standard errors) over the last decade.
pub fn a3_stability_plateau(checkpoints: &[Checkpoint]) -> CriterionResult {
    let mut sorted: Vec<&Checkpoint> = checkpoints.iter().collect();
    sorted.sort_by_key(|c| c.t);
    if sorted.len() < 2 {
        return CriterionResult::new("A3", false, "needs at least two horizons".into());
    }
    let a = sorted[sorted.len() - 2];
    let b = sorted[sorted.len() - 1];
    let (va, vb) = (&a.sup_g.values, &b.sup_g.values);
    if va.len() != vb.len() || va.is_empty() {
        return CriterionResult::new("A3", false, "mismatched seed sets".into());
    }
    let mut diff = CompensatedScalar::default();
    for (x, y) in va.iter().zip(vb) {
        diff.add_unchecked(y - x);
    }
    let mean_diff = diff.value() / va.len() as f64;
    let mut var = CompensatedScalar::default();
    for (x, y) in va.iter().zip(vb) {
        let d = (y - x) - mean_diff;
        var.add_unchecked(d * d);
    }
    let se_diff = if va.len() > 1 {
        (var.value() / (va.len() - 1) as f64 / va.len() as f64).sqrt()
    } else {
        0.0
    };
    let allowance = PLATEAU_MAX_REL_INCREASE * a.sup_g.mean + 2.0 * se_diff;
    let pass = mean_diff < allowance;
    CriterionResult::new(
        "A3",
        pass,
        format!(
            "sup growth {:.4e} over [{}, {}], allowance {:.4e}",
            mean_diff, a.t, b.t, allowance
        ),
    )
}

/// A4: mean final-iterate gradient energy decays across decades and ends
/// below the threshold.
pub fn a4_mean_square_decay(checkpoints: &[Checkpoint]) -> CriterionResult {
    match msc_decay_check(checkpoints, MS_FINAL_THRESHOLD) {
        Ok(rep) => CriterionResult::new(
            "A4",
            rep.pass,
            format!(
                "final={:.4e} (threshold {MS_FINAL_THRESHOLD}), legs ok: {}/{}",
                rep.final_value,
                rep.legs.iter().filter(|l| l.ok).count(),
                rep.legs.len()
            ),
        ),
        Err(e) => CriterionResult::new("A4", false, format!("not computable: {e}")),
    }
}

/// A5: the inverse-sqrt accumulator partial sum keeps growing — its mean at
/// the last horizon is at least 2.5x the previous decade's.
pub fn a5_stepsize_divergence(checkpoints: &[Checkpoint]) -> CriterionResult {
    let mut sorted: Vec<&Checkpoint> = checkpoints.iter().collect();
    sorted.sort_by_key(|c| c.t);
    if sorted.len() < 2 {
        return CriterionResult::new("A5", false, "needs at least two horizons".into());
    }
    let a = sorted[sorted.len() - 2];
    let b = sorted[sorted.len() - 1];
    let ratio = b.invsqrt_partial.mean / a.invsqrt_partial.mean;
    let pass = ratio >= STEPSIZE_DIVERGENCE_MIN_RATIO;
    CriterionResult::new(
        "A5",
        pass,
        format!(
            "partial-sum ratio {:.3} over [{}, {}] (min {STEPSIZE_DIVERGENCE_MIN_RATIO})",
            ratio, a.t, b.t
        ),
    )
}

/// A6: Markov-style high-probability check of the average squared gradient at
/// the 10^4 horizon for delta in {0.1, 0.25}.
pub fn a6_high_probability(checkpoints: &[Checkpoint]) -> CriterionResult {
    let ck = checkpoints.iter().find(|c| c.t == 10_000).or_else(|| {
        let mut sorted: Vec<&Checkpoint> = checkpoints.iter().collect();
        sorted.sort_by_key(|c| c.t);
        sorted.get(sorted.len().saturating_sub(2)).copied()
    });
    let Some(ck) = ck else {
        return CriterionResult::new("A6", false, "no suitable horizon".into());
    };
    let mut detail = format!("T={}:", ck.t);
    let mut pass = true;
    for delta in HIGH_PROB_DELTAS {
        match high_prob_check(ck, Metric::AvgGradSq, delta) {
            Ok(rep) => {
                pass &= rep.pass;
                detail.push_str(&format!(
                    " delta={delta}: exceed={:.4} bound={:.4};",
                    rep.empirical_exceed_fraction,
                    rep.delta + rep.binomial_slack
                ));
            }
            Err(e) => {
                pass = false;
                detail.push_str(&format!(" delta={delta}: {e};"));
            }
        }
    }
    CriterionResult::new("A6", pass, detail)
}

/// A7: RMSProp schedule invariants hold on every recorded step of every seed
/// (per-coordinate multiplier non-increase; `t v_{t,i} >= r1 S_{t,i}`), plus
/// exact schedule spot values at t = 2.
pub fn a7_rmsprop_invariants(manifest: &RunManifest) -> CriterionResult {
    let (b2, a2) = rmsprop_schedule(2, 0.9);
    if b2 != 0.5 || a2 != 1.0 / 2.0_f64.sqrt() {
        return CriterionResult::new("A7", false, "schedule spot values at t=2 are wrong".into());
    }
    let mut worst_eta = f64::NEG_INFINITY;
    let mut worst_energy = f64::NEG_INFINITY;
    let mut seeds = 0;
    for s in &manifest.per_seed {
        let Some(r) = &s.rmsprop else {
            return CriterionResult::new(
                "A7",
                false,
                format!("seed {} has no rmsprop stats", s.seed),
            );
        };
        worst_eta = worst_eta.max(r.invariants.max_eta_increase_rel);
        worst_energy = worst_energy.max(r.invariants.max_energy_deficit_rel);
        seeds += 1;
    }
    let pass = seeds > 0 && worst_eta <= RMSPROP_REL_TOL && worst_energy <= RMSPROP_REL_TOL;
    CriterionResult::new(
        "A7",
        pass,
        format!(
            "{seeds} seeds; max eta increase {:.3e}, max energy deficit {:.3e} (tol {RMSPROP_REL_TOL})",
            worst_eta, worst_energy
        ),
    )
}

/// A8: the RMSProp scaling state settles — `|v_T - v_{T/2}| / |v_T| <= 0.05`
/// for at least 95% of seeds.
pub fn a8_v_convergence(manifest: &RunManifest) -> CriterionResult {
    let t = manifest.profile.t;
    let half = t / 2;
    let mut ok = 0usize;
    let mut total = 0usize;
    let mut worst: f64 = 0.0;
    for s in &manifest.per_seed {
        let Some(r) = &s.rmsprop else { continue };
        let vt = r.v_snapshots.iter().find(|v| v.t == t);
        let vh = r.v_snapshots.iter().find(|v| v.t == half);
        let (Some(vt), Some(vh)) = (vt, vh) else {
            continue;
        };
        let mut num = CompensatedScalar::default();
        let mut den = CompensatedScalar::default();
        for (a, b) in vt.v.iter().zip(&vh.v) {
            num.add_unchecked((a - b) * (a - b));
            den.add_unchecked(a * a);
        }
        let rel = (num.value() / den.value()).sqrt();
        worst = worst.max(rel);
        total += 1;
        if rel <= V_CONVERGENCE_REL {
            ok += 1;
        }
    }
    if total == 0 {
        return CriterionResult::new("A8", false, "no scaling-state snapshots recorded".into());
    }
    let frac = ok as f64 / total as f64;
    let pass = frac >= V_CONVERGENCE_SEED_FRACTION;
    CriterionResult::new(
        "A8",
        pass,
        format!(
            "{ok}/{total} seeds with rel change <= {V_CONVERGENCE_REL} (need {:.0}%), worst {:.4}",
            V_CONVERGENCE_SEED_FRACTION * 100.0,
            worst
        ),
    )
}

/// A9: every trajectory's mean decrease residual stays within three standard
/// errors of zero.
pub fn a9_decrease_residual(manifest: &RunManifest) -> CriterionResult {
    let mut worst_margin = f64::NEG_INFINITY;
    let mut seeds = 0;
    for s in &manifest.per_seed {
        let Some(r) = &s.decrease_residual else {
            return CriterionResult::new(
                "A9",
                false,
                format!("seed {} has no residual statistics", s.seed),
            );
        };
        worst_margin = worst_margin.max(r.mean - RESIDUAL_SE_UNITS * r.se);
        seeds += 1;
    }
    let pass = seeds > 0 && worst_margin <= 0.0;
    CriterionResult::new(
        "A9",
        pass,
        format!("{seeds} seeds; worst (mean - {RESIDUAL_SE_UNITS} se) = {worst_margin:.4e}"),
    )
}

/// Abort budget: more than 1% aborted trajectories invalidates the ensemble.
pub fn abort_budget(manifest: &RunManifest) -> CriterionResult {
    let pass = manifest.aborted_fraction <= MAX_ABORT_FRACTION;
    CriterionResult::new(
        "ABRT",
        pass,
        format!(
            "aborted fraction {:.4} (max {MAX_ABORT_FRACTION})",
            manifest.aborted_fraction
        ),
    )
}

/// Criteria applicable to a finished run, selected from its profile.
pub fn evaluate_run(manifest: &RunManifest, checkpoints: &[Checkpoint]) -> Vec<CriterionResult> {
    let mut out = vec![abort_budget(manifest)];
    let noisy = manifest.constants.sigma1 > 0.0;
    let enough_horizons = checkpoints.len() >= 3;
    match manifest.profile.optimizer_kind.as_str() {
        "adagrad_norm" => {
            if noisy && enough_horizons {
                out.push(a1_linear_accumulator(
                    checkpoints,
                    manifest.constants.sigma1,
                ));
            }
            if enough_horizons {
                out.push(a2_decay_rate(checkpoints));
            }
            if manifest.profile.objective_kind == "cosine_well" {
                out.push(a3_stability_plateau(checkpoints));
            }
            if enough_horizons {
                out.push(a4_mean_square_decay(checkpoints));
            }
            if noisy {
                out.push(a5_stepsize_divergence(checkpoints));
            }
            if noisy && manifest.profile.seeds >= 50 {
                out.push(a6_high_probability(checkpoints));
            }
            out.push(a9_decrease_residual(manifest));
        }
        "rmsprop" => {
            out.push(a7_rmsprop_invariants(manifest));
            out.push(a8_v_convergence(manifest));
        }
        _ => {}
    }
    out
}
