//! Pre-run certification of the declared contracts: analytic gradients
//! against finite differences, the declared Lipschitz bound, the
//! gradient-energy bound `|grad|^2 <= 2L (g - g*)`, the quadratic descent
//! bound, oracle unbiasedness, the affine second-moment bound, and
//! near-critical draw boundedness.

use serde::{Deserialize, Serialize};

use crate::config::{streams, ResolvedExperiment};
use crate::error::Result;
use crate::numerics::{standard_normal, RngStream, Vector};
use crate::objectives::{certify_smoothness, finite_difference_deviation, SmoothnessCertificate};
use crate::oracles::{
    affine_upper_bound, bound_check, coordinatewise_affine_fit, empirical_affine_fit,
    near_critical_check, probe_points, unbiasedness_check, AffineFit, NearCriticalReport,
    OracleKind, UnbiasednessReport,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FdReport {
    pub points: usize,
    pub h: f64,
    pub max_rel_deviation: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcessReport {
    pub samples: usize,
    /// Max of (left side - right side); nonpositive within tolerance passes.
    pub max_excess: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Fitted affine constants against the declared pair. Each coefficient must
/// land within the relative tolerance plus three of its fitted standard
/// errors, so exactly-zero declared intercepts stay checkable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineCheck {
    pub fit: AffineFit,
    pub declared: (f64, f64),
    pub sigma0_ok: bool,
    pub sigma1_ok: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoordinatewiseCheck {
    pub sigma0_hat: f64,
    pub sigma1_hat: f64,
    pub se_sigma0: f64,
    pub se_sigma1: f64,
    pub declared: (f64, f64),
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificationReport {
    pub objective_kind: String,
    pub oracle_kind: String,
    pub fd: FdReport,
    pub smoothness: SmoothnessCertificate,
    pub gradient_energy_bound: ExcessReport,
    pub descent_bound: ExcessReport,
    pub unbiasedness: Vec<UnbiasednessReport>,
    pub affine: AffineCheck,
    pub coordinatewise: Option<CoordinatewiseCheck>,
    pub near_critical: NearCriticalReport,
    pub pass: bool,
}

pub fn certify(exp: &ResolvedExperiment) -> Result<CertificationReport> {
    let obj = &exp.objective;
    let cfg = &exp.check;
    let d = obj.dim();
    let l = obj.declared_l();
    let gstar = obj.declared_gstar();

    // one dedicated stream per sub-check
    let stream = |k: u64| RngStream::new(exp.base_seed, streams::CHECK_BASE + k);

    let fd = {
        let mut rng = stream(0);
        let mut max_rel: f64 = 0.0;
        for _ in 0..cfg.fd_points {
            let theta = standard_normal(&mut rng, d)?;
            max_rel = max_rel.max(finite_difference_deviation(obj, &theta, cfg.fd_h)?);
        }
        FdReport {
            points: cfg.fd_points,
            h: cfg.fd_h,
            max_rel_deviation: max_rel,
            tol: cfg.fd_rel_tol,
            pass: max_rel <= cfg.fd_rel_tol,
        }
    };

    let smoothness = certify_smoothness(
        obj,
        &mut stream(1),
        cfg.smoothness_pairs,
        cfg.smoothness_radius,
    )?;

    let gradient_energy_bound = {
        let mut rng = stream(2);
        let mut max_excess = f64::NEG_INFINITY;
        for _ in 0..cfg.bound_samples {
            let theta = standard_normal(&mut rng, d)?;
            let g = obj.eval(&theta)?;
            let gsq = obj.grad(&theta)?.norm_sq();
            max_excess = max_excess.max(gsq - 2.0 * l * (g - gstar));
        }
        ExcessReport {
            samples: cfg.bound_samples,
            max_excess,
            tol: 1e-9,
            pass: max_excess <= 1e-9,
        }
    };

    let descent_bound = {
        let mut rng = stream(3);
        let mut max_excess = f64::NEG_INFINITY;
        for _ in 0..cfg.bound_samples {
            let x = standard_normal(&mut rng, d)?;
            let y = standard_normal(&mut rng, d)?;
            let diff = Vector::new(
                y.as_slice()
                    .iter()
                    .zip(x.as_slice())
                    .map(|(b, a)| b - a)
                    .collect(),
            )?;
            let lhs = obj.eval(&y)?;
            let rhs = obj.eval(&x)? + obj.grad(&x)?.dot(&diff)? + 0.5 * l * diff.norm_sq();
            max_excess = max_excess.max(lhs - rhs);
        }
        ExcessReport {
            samples: cfg.bound_samples,
            max_excess,
            tol: 1e-9,
            pass: max_excess <= 1e-9,
        }
    };

    let unbiasedness = {
        let mut rng = stream(4);
        let mut reports = Vec::with_capacity(cfg.unbiased_points);
        for _ in 0..cfg.unbiased_points {
            let theta = standard_normal(&mut rng, d)?;
            reports.push(unbiasedness_check(
                &exp.oracle,
                obj,
                &theta,
                cfg.unbiased_draws,
                &mut rng,
            )?);
        }
        reports
    };

    let probes = probe_points(obj, cfg.affine_probes.max(8), 0.5, 50.0)?;
    let affine = {
        let mut fit =
            empirical_affine_fit(&exp.oracle, obj, &probes, cfg.affine_draws, &mut stream(5))?;
        // un-declared constants resolve to the smallest affine majorant of
        // the measurements, mirroring what a run would record
        let declared = exp
            .oracle
            .declared
            .unwrap_or_else(|| affine_upper_bound(&fit));
        let (max_violation, certified) = bound_check(&fit.probes, declared);
        fit.max_violation = max_violation;
        fit.certified = certified;
        let sigma0_ok = (fit.sigma0_hat - declared.0).abs()
            <= cfg.affine_rel_tol * declared.0 + 3.0 * fit.se_sigma0;
        let sigma1_ok = exp.oracle.declared.is_none()
            || (fit.sigma1_hat - declared.1).abs()
                <= cfg.affine_rel_tol * declared.1 + 3.0 * fit.se_sigma1;
        let pass = sigma0_ok && sigma1_ok && fit.certified;
        AffineCheck {
            fit,
            declared,
            sigma0_ok,
            sigma1_ok,
            pass,
        }
    };

    let coordinatewise = match coordinatewise_declared(&exp.oracle.kind) {
        Some(declared) => {
            let (s0, s1, se0, se1) = coordinatewise_affine_fit(
                &exp.oracle,
                obj,
                &probes,
                cfg.affine_draws,
                &mut stream(6),
            )?;
            // cells within a probe share the same draws; inflate the pooled
            // standard errors by the full design effect sqrt(d)
            let deff = (obj.dim() as f64).sqrt();
            let pass = (s0 - declared.0).abs()
                <= cfg.affine_rel_tol * declared.0 + 3.0 * se0 * deff
                && (s1 - declared.1).abs() <= cfg.affine_rel_tol * declared.1 + 3.0 * se1 * deff;
            Some(CoordinatewiseCheck {
                sigma0_hat: s0,
                sigma1_hat: s1,
                se_sigma0: se0,
                se_sigma1: se1,
                declared,
                pass,
            })
        }
        None => None,
    };

    let near_critical = near_critical_check(
        &exp.oracle,
        obj,
        cfg.near_critical_d0,
        cfg.near_critical_draws,
        &mut stream(7),
    )?;

    let pass = fd.pass
        && smoothness.ok
        && gradient_energy_bound.pass
        && descent_bound.pass
        && unbiasedness.iter().all(|u| u.pass)
        && affine.pass
        && coordinatewise.as_ref().is_none_or(|c| c.pass)
        && near_critical.pass;

    Ok(CertificationReport {
        objective_kind: crate::manifest::objective_kind_name(obj).into(),
        oracle_kind: crate::manifest::oracle_kind_name(&exp.oracle.kind).into(),
        fd,
        smoothness,
        gradient_energy_bound,
        descent_bound,
        unbiasedness,
        affine,
        coordinatewise,
        near_critical,
        pass,
    })
}

/// Declared per-coordinate `(sigma0, sigma1)` when the oracle asserts the
/// coordinate-wise affine bound analytically.
fn coordinatewise_declared(kind: &OracleKind) -> Option<(f64, f64)> {
    match kind {
        OracleKind::AdditiveGaussian { sigma } => Some((1.0, sigma * sigma)),
        OracleKind::Multiplicative { gamma, .. } => Some((1.0 + gamma * gamma, 0.0)),
        OracleKind::MiniBatch { .. } => None,
    }
}

pub const CERTIFICATION_FILE: &str = "certification.json";

pub fn certification_lines(report: &CertificationReport) -> Vec<String> {
    let mut lines = Vec::new();
    let mark = |b: bool| if b { "PASS" } else { "FAIL" };
    lines.push(format!(
        "fd_gradient        {}  max_rel={:.3e} tol={:.1e}",
        mark(report.fd.pass),
        report.fd.max_rel_deviation,
        report.fd.tol
    ));
    lines.push(format!(
        "smoothness         {}  l_hat={:.6} declared={:.6}",
        mark(report.smoothness.ok),
        report.smoothness.l_hat,
        report.smoothness.declared_l
    ));
    lines.push(format!(
        "gradient_energy    {}  max_excess={:.3e}",
        mark(report.gradient_energy_bound.pass),
        report.gradient_energy_bound.max_excess
    ));
    lines.push(format!(
        "descent_bound      {}  max_excess={:.3e}",
        mark(report.descent_bound.pass),
        report.descent_bound.max_excess
    ));
    lines.push(format!(
        "unbiasedness       {}  points={}",
        mark(report.unbiasedness.iter().all(|u| u.pass)),
        report.unbiasedness.len()
    ));
    lines.push(format!(
        "affine_noise       {}  fit=({:.4}, {:.4}) declared=({:.4}, {:.4})",
        mark(report.affine.pass),
        report.affine.fit.sigma0_hat,
        report.affine.fit.sigma1_hat,
        report.affine.declared.0,
        report.affine.declared.1
    ));
    if let Some(cw) = &report.coordinatewise {
        lines.push(format!(
            "coordinate_affine  {}  fit=({:.4}, {:.4})",
            mark(cw.pass),
            cw.sigma0_hat,
            cw.sigma1_hat
        ));
    }
    let nc = &report.near_critical;
    if nc.bounded_declared {
        lines.push(format!(
            "near_critical      {}  d1_hat={:.4e}{}",
            mark(nc.pass),
            nc.d1_hat,
            nc.analytic_d1
                .map(|b| format!(" bound={b:.4e}"))
                .unwrap_or_default()
        ));
    } else {
        lines.push(format!(
            "near_critical      PASS  unbounded draws declared; asymptotic guarantees not certified (d1_hat={:.4e})",
            nc.d1_hat
        ));
    }
    lines.push(format!("overall            {}", mark(report.pass)));
    lines
}
