//! Cross-seed ensemble statistics at checkpoint horizons and the quantitative
//! checks built on them: linear accumulator growth, log-log rate fits,
//! decay-across-decades, and Markov-style high-probability tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedScalar;
use crate::oracles::ols;

/// Per-seed metric values captured exactly (every-step accumulators) when a
/// trajectory crosses a checkpoint horizon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedCheckpoint {
    pub seed: u64,
    pub t: u64,
    /// Accumulator `S_T`.
    pub s_total: f64,
    /// Running supremum of the true objective over iterates up to `T`.
    pub sup_g: f64,
    /// `(1/T) sum_{n<=T} |grad g(theta_n)|^2`.
    pub avg_grad_sq: f64,
    /// `min_{n<=T} |grad g(theta_n)|^2`.
    pub min_grad_sq: f64,
    /// `|grad g(theta_T)|^2`.
    pub final_grad_sq: f64,
    /// `sum_{n<=T} 1/sqrt(S_n)`.
    pub invsqrt_partial: f64,
}

pub const QUANTILE_PROBS: [f64; 4] = [0.5, 0.75, 0.9, 0.95];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    STotal,
    SupG,
    AvgGradSq,
    MinGradSq,
    FinalGradSq,
    InvSqrtPartial,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::STotal => "s_total",
            Metric::SupG => "sup_g",
            Metric::AvgGradSq => "avg_grad_sq",
            Metric::MinGradSq => "min_grad_sq",
            Metric::FinalGradSq => "final_grad_sq",
            Metric::InvSqrtPartial => "invsqrt_partial",
        }
    }

    pub const ALL: [Metric; 6] = [
        Metric::STotal,
        Metric::SupG,
        Metric::AvgGradSq,
        Metric::MinGradSq,
        Metric::FinalGradSq,
        Metric::InvSqrtPartial,
    ];
}

/// Per-seed values (seed order) plus summary statistics of one metric at one
/// horizon. `sd`/`se` are absent for single-seed ensembles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricStats {
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: Option<f64>,
    pub se: Option<f64>,
    /// `(p, nearest-rank quantile)` pairs for p in {0.5, 0.75, 0.9, 0.95}.
    pub quantiles: Vec<(f64, f64)>,
}

impl MetricStats {
    fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = compensated_mean(&values);
        let (sd, se) = if n > 1 {
            let mut acc = CompensatedScalar::default();
            for &v in &values {
                acc.add_unchecked((v - mean) * (v - mean));
            }
            let sd = (acc.value() / (n - 1) as f64).sqrt();
            (Some(sd), Some(sd / (n as f64).sqrt()))
        } else {
            (None, None)
        };
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let quantiles = QUANTILE_PROBS
            .iter()
            .map(|&p| {
                let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
                (p, sorted[rank - 1])
            })
            .collect();
        MetricStats {
            values,
            mean,
            sd,
            se,
            quantiles,
        }
    }

    pub fn se_or_zero(&self) -> f64 {
        self.se.unwrap_or(0.0)
    }
}

fn compensated_mean(values: &[f64]) -> f64 {
    let mut acc = CompensatedScalar::default();
    for &v in values {
        acc.add_unchecked(v);
    }
    acc.value() / values.len() as f64
}

/// All six metric summaries at one horizon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub seeds: usize,
    pub s_total: MetricStats,
    pub sup_g: MetricStats,
    pub avg_grad_sq: MetricStats,
    pub min_grad_sq: MetricStats,
    pub final_grad_sq: MetricStats,
    pub invsqrt_partial: MetricStats,
}

impl Checkpoint {
    pub fn metric(&self, m: Metric) -> &MetricStats {
        match m {
            Metric::STotal => &self.s_total,
            Metric::SupG => &self.sup_g,
            Metric::AvgGradSq => &self.avg_grad_sq,
            Metric::MinGradSq => &self.min_grad_sq,
            Metric::FinalGradSq => &self.final_grad_sq,
            Metric::InvSqrtPartial => &self.invsqrt_partial,
        }
    }
}

/// Groups per-seed checkpoint rows by horizon. Every requested horizon must
/// be present for exactly the same seed set; seeds are ordered by seed id so
/// the reduction is deterministic.
pub fn aggregate(rows: &[SeedCheckpoint], horizons: &[u64]) -> Result<Vec<Checkpoint>> {
    if rows.is_empty() {
        return Err(Error::Domain(
            "aggregate needs at least one trajectory row".into(),
        ));
    }
    let mut out = Vec::with_capacity(horizons.len());
    let mut expected_seeds: Option<Vec<u64>> = None;
    for &t in horizons {
        let mut at_t: Vec<&SeedCheckpoint> = rows.iter().filter(|r| r.t == t).collect();
        if at_t.is_empty() {
            return Err(Error::Domain(format!("no trajectory reached horizon {t}")));
        }
        at_t.sort_by_key(|r| r.seed);
        let seeds: Vec<u64> = at_t.iter().map(|r| r.seed).collect();
        match &expected_seeds {
            None => expected_seeds = Some(seeds),
            Some(e) if *e != seeds => {
                return Err(Error::Domain(format!(
                    "inconsistent seed sets across horizons (at {t}: {} seeds, expected {})",
                    seeds.len(),
                    e.len()
                )));
            }
            _ => {}
        }
        out.push(Checkpoint {
            t,
            seeds: at_t.len(),
            s_total: MetricStats::from_values(at_t.iter().map(|r| r.s_total).collect()),
            sup_g: MetricStats::from_values(at_t.iter().map(|r| r.sup_g).collect()),
            avg_grad_sq: MetricStats::from_values(at_t.iter().map(|r| r.avg_grad_sq).collect()),
            min_grad_sq: MetricStats::from_values(at_t.iter().map(|r| r.min_grad_sq).collect()),
            final_grad_sq: MetricStats::from_values(at_t.iter().map(|r| r.final_grad_sq).collect()),
            invsqrt_partial: MetricStats::from_values(
                at_t.iter().map(|r| r.invsqrt_partial).collect(),
            ),
        });
    }
    Ok(out)
}

/// Ordinary least squares of `log(mean metric [/ ln T])` against `log T`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent_hat: f64,
    pub constant_hat: f64,
    pub r_squared: f64,
    pub log_corrected: bool,
}

pub fn fit_rate(
    checkpoints: &[Checkpoint],
    metric: Metric,
    log_corrected: bool,
) -> Result<RateFit> {
    if checkpoints.len() < 3 {
        return Err(Error::Domain("fit_rate needs at least 3 horizons".into()));
    }
    let tmin = checkpoints.iter().map(|c| c.t).min().unwrap();
    let tmax = checkpoints.iter().map(|c| c.t).max().unwrap();
    if tmax < tmin.saturating_mul(100) {
        return Err(Error::Domain(
            "fit_rate needs horizons spanning >= 2 decades".into(),
        ));
    }
    let mut xs = Vec::with_capacity(checkpoints.len());
    let mut ys = Vec::with_capacity(checkpoints.len());
    for c in checkpoints {
        let m = c.metric(metric).mean;
        if !(m > 0.0) {
            return Err(Error::Domain(format!(
                "fit_rate needs positive metric means, got {m} at T={}",
                c.t
            )));
        }
        let t = c.t as f64;
        xs.push(t.ln());
        ys.push(if log_corrected {
            (m / t.ln()).ln()
        } else {
            m.ln()
        });
    }
    let (slope, intercept, r2) = ols(&xs, &ys);
    Ok(RateFit {
        exponent_hat: slope,
        constant_hat: intercept.exp(),
        r_squared: r2,
        log_corrected,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// OLS of the mean accumulator value against the horizon on linear axes.
pub fn linear_growth_check(checkpoints: &[Checkpoint]) -> Result<LinearFit> {
    if checkpoints.len() < 3 {
        return Err(Error::Domain(
            "linear_growth_check needs at least 3 horizons".into(),
        ));
    }
    let xs: Vec<f64> = checkpoints.iter().map(|c| c.t as f64).collect();
    let ys: Vec<f64> = checkpoints.iter().map(|c| c.s_total.mean).collect();
    let (slope, intercept, r2) = ols(&xs, &ys);
    Ok(LinearFit {
        slope,
        intercept,
        r_squared: r2,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HighProbReport {
    pub delta: f64,
    pub markov_bound: f64,
    pub empirical_exceed_fraction: f64,
    pub binomial_slack: f64,
    pub pass: bool,
}

/// Fraction of seeds whose metric exceeds `mean / delta`, checked against
/// `delta` with two-sigma binomial slack.
pub fn high_prob_check(
    checkpoint: &Checkpoint,
    metric: Metric,
    delta: f64,
) -> Result<HighProbReport> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(
            "high_prob_check requires delta in (0, 1]".into(),
        ));
    }
    let stats = checkpoint.metric(metric);
    let m = stats.values.len();
    if m < 50 {
        return Err(Error::Domain(format!(
            "high_prob_check requires >= 50 seeds, got {m}"
        )));
    }
    let markov_bound = stats.mean / delta;
    let exceed = stats.values.iter().filter(|&&v| v > markov_bound).count() as f64 / m as f64;
    let slack = 2.0 * (delta * (1.0 - delta) / m as f64).sqrt();
    Ok(HighProbReport {
        delta,
        markov_bound,
        empirical_exceed_fraction: exceed,
        binomial_slack: slack,
        pass: exceed <= delta + slack,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MscLeg {
    pub t_from: u64,
    pub t_to: u64,
    pub mean_from: f64,
    pub mean_to: f64,
    pub slack: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MscDecayReport {
    pub legs: Vec<MscLeg>,
    pub final_value: f64,
    pub final_threshold: f64,
    pub final_ok: bool,
    pub pass: bool,
}

/// Checks that the mean final-iterate gradient energy strictly decreases
/// across consecutive horizons (with two-standard-error slack) and ends below
/// the given threshold.
pub fn msc_decay_check(checkpoints: &[Checkpoint], final_threshold: f64) -> Result<MscDecayReport> {
    if checkpoints.len() < 3 {
        return Err(Error::Domain(
            "msc_decay_check needs at least 3 horizons".into(),
        ));
    }
    let mut sorted: Vec<&Checkpoint> = checkpoints.iter().collect();
    sorted.sort_by_key(|c| c.t);
    let mut legs = Vec::new();
    let mut all_ok = true;
    for pair in sorted.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (sa, sb) = (&a.final_grad_sq, &b.final_grad_sq);
        let slack = 2.0 * (sa.se_or_zero().powi(2) + sb.se_or_zero().powi(2)).sqrt();
        let ok = sb.mean < sa.mean + slack;
        all_ok &= ok;
        legs.push(MscLeg {
            t_from: a.t,
            t_to: b.t,
            mean_from: sa.mean,
            mean_to: sb.mean,
            slack,
            ok,
        });
    }
    let final_value = sorted.last().unwrap().final_grad_sq.mean;
    let final_ok = final_value < final_threshold;
    Ok(MscDecayReport {
        legs,
        final_value,
        final_threshold,
        final_ok,
        pass: all_ok && final_ok,
    })
}
