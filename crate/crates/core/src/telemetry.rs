//! Per-step recording of the quantities that drive the sufficient-decrease
//! analysis: the decrease term `zeta(n) = |grad g(theta_n)|^2 / sqrt(S_{n-1})`,
//! the noise-energy term `Gamma_n = |G_n|^2 / S_n`, the corrected objective
//! `ghat`, running suprema and partial sums, plus threshold-crossing
//! (excursion) segmentation of the `ghat` series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CompensatedScalar, RngStream, Vector};
use crate::objectives::Objective;
use crate::optimizers::{AdaGradNormState, RmsPropState, SgdState};
use crate::oracles::{sample, Oracle};

/// Declared constants of a run, from which the corrected objective and its
/// decrease inequality coefficients are computed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub sigma0: f64,
    pub sigma1: f64,
    pub alpha0: f64,
    pub s0: f64,
    pub l: f64,
}

impl LyapunovParams {
    /// Coefficient of `Gamma_n` in the decrease inequality:
    /// `alpha0 sigma1 / (2 sqrt(S0)) + L alpha0^2 / 2`.
    pub fn c_gamma_1(&self) -> f64 {
        self.alpha0 * self.sigma1 / (2.0 * self.s0.sqrt())
            + self.l * self.alpha0 * self.alpha0 / 2.0
    }

    /// Coefficient of `Gamma_n / sqrt(S_n)`:
    /// `sigma0 (2 sigma0 + 1) alpha0^3 L^2 / 2`.
    pub fn c_gamma_2(&self) -> f64 {
        self.sigma0 * (2.0 * self.sigma0 + 1.0) * self.alpha0.powi(3) * self.l * self.l / 2.0
    }

    /// Corrected objective `ghat = g + (sigma0 alpha0 / 2) zeta`.
    pub fn ghat(&self, g: f64, zeta: f64) -> f64 {
        g + 0.5 * self.sigma0 * self.alpha0 * zeta
    }

    /// Adjacent-step growth bound: `ghat(theta_{n+1}) - ghat(theta_n)` never
    /// exceeds `h(ghat(theta_n))` with
    /// `h(x) = alpha0 sqrt(2L) (1 + sigma0 L / (2 sqrt(S0))) sqrt(x)
    ///         + (1 + sigma0 alpha0 L / (2 sqrt(S0))) L alpha0^2 / 2`.
    pub fn adjacency_h(&self, x: f64) -> f64 {
        let root = self.alpha0
            * (2.0 * self.l).sqrt()
            * (1.0 + self.sigma0 * self.l / (2.0 * self.s0.sqrt()))
            * x.max(0.0).sqrt();
        let flat = (1.0 + self.sigma0 * self.alpha0 * self.l / (2.0 * self.s0.sqrt()))
            * self.l
            * self.alpha0
            * self.alpha0
            / 2.0;
        root + flat
    }
}

/// One recorded step. `S` is the squared-draw accumulator for AdaGrad-Norm;
/// for RMSProp it is the summed per-coordinate energy `sum_i S_{t,i}` and for
/// SGD a diagnostic accumulator with the same recurrence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub n: u64,
    pub g: f64,
    pub grad_sq: f64,
    pub s_prev: f64,
    pub s: f64,
    pub zeta: f64,
    pub gamma: f64,
    pub ghat: f64,
    pub step_norm: f64,
    pub invsqrt_s_partial: f64,
    pub running_sup_g: f64,
}

pub const CSV_HEADER: &str =
    "n,g,grad_sq,S_prev,S,zeta,gamma,ghat,step_norm,invsqrtS_partial,running_sup_g";

impl StepRow {
    /// Shortest round-trip decimal rendering (17 significant digits max).
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.g,
            self.grad_sq,
            self.s_prev,
            self.s,
            self.zeta,
            self.gamma,
            self.ghat,
            self.step_norm,
            self.invsqrt_s_partial,
            self.running_sup_g
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<StepRow> {
        let mut it = line.split(',');
        let mut next = || -> Result<&str> {
            it.next()
                .ok_or_else(|| Error::Domain(format!("short CSV row: {line}")))
        };
        let n: u64 = next()?
            .parse()
            .map_err(|e| Error::Domain(format!("bad step index: {e}")))?;
        let f = |name: &str, s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::Domain(format!("bad {name}: {e}")))
        };
        Ok(StepRow {
            n,
            g: f("g", next()?)?,
            grad_sq: f("grad_sq", next()?)?,
            s_prev: f("S_prev", next()?)?,
            s: f("S", next()?)?,
            zeta: f("zeta", next()?)?,
            gamma: f("gamma", next()?)?,
            ghat: f("ghat", next()?)?,
            step_norm: f("step_norm", next()?)?,
            invsqrt_s_partial: f("invsqrtS_partial", next()?)?,
            running_sup_g: f("running_sup_g", next()?)?,
        })
    }

    /// Derived cross term `|G_n|^2 / (sqrt(S_n) (sqrt(S_{n-1}) + sqrt(S_n)))`,
    /// not stored as a column.
    pub fn lambda(&self) -> f64 {
        self.gamma * self.s / (self.s.sqrt() * (self.s_prev.sqrt() + self.s.sqrt()))
    }
}

/// Threshold-crossing segmentation of a `ghat` series.
///
/// Index triples `(t1, t2, t3)` are 1-based: `t1` first enters `(delta0, inf)`,
/// `t2` first leaves `(delta0, 2 delta0]` (either back below `delta0` or above
/// `2 delta0`), `t3` first returns below `delta0`. An excursion with
/// `t2 < t3` overshot `2 delta0` before settling. Open excursions are
/// truncated at the series end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionLog {
    pub delta0: f64,
    pub triples: Vec<(u64, u64, u64)>,
    pub overshoot_count: u64,
}

pub fn segment_excursions(series: &[f64], delta0: f64) -> Result<ExcursionLog> {
    if !(delta0 > 0.0) || !delta0.is_finite() {
        return Err(Error::Domain("delta0 must be positive and finite".into()));
    }
    let len = series.len() as u64;
    let at = |k: u64| series[(k - 1) as usize];
    let mut triples = Vec::new();
    let mut overshoot_count = 0;
    let mut start = 1u64;
    while start <= len {
        let Some(t1) = (start..=len).find(|&k| at(k) > delta0) else {
            break;
        };
        let t2 = (t1..=len)
            .find(|&k| at(k) <= delta0 || at(k) > 2.0 * delta0)
            .unwrap_or(len);
        let t3 = (t2..=len).find(|&k| at(k) <= delta0).unwrap_or(len);
        if t2 < t3 {
            overshoot_count += 1;
        }
        triples.push((t1, t2, t3));
        start = t3 + 1;
        if t3 == len && at(len) > delta0 {
            // truncated open excursion
            break;
        }
    }
    Ok(ExcursionLog {
        delta0,
        triples,
        overshoot_count,
    })
}

/// Replicate-sampling estimate of the draw's conditional mean and energy at a
/// fixed point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionalEstimate {
    pub replicates: usize,
    pub mean_grad: Vector,
    pub se_grad: Vec<f64>,
    pub mean_norm_sq: f64,
    pub se_norm_sq: f64,
}

pub fn estimate_conditional(
    oracle: &Oracle,
    obj: &Objective,
    theta: &Vector,
    replicates: usize,
    rng: &mut RngStream,
) -> Result<ConditionalEstimate> {
    if replicates < 100 {
        return Err(Error::Domain(
            "estimate_conditional requires >= 100 replicates".into(),
        ));
    }
    let d = obj.dim();
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    let mut nsq = Welford::default();
    for k in 0..replicates {
        let g = sample(oracle, obj, theta, rng)?;
        for i in 0..d {
            let delta = g[i] - mean[i];
            mean[i] += delta / (k + 1) as f64;
            m2[i] += delta * (g[i] - mean[i]);
        }
        nsq.push(g.norm_sq());
    }
    let se_grad = m2
        .iter()
        .map(|&v| (v / ((replicates - 1) as f64 * replicates as f64)).sqrt())
        .collect();
    Ok(ConditionalEstimate {
        replicates,
        mean_grad: Vector::new(mean)?,
        se_grad,
        mean_norm_sq: nsq.mean(),
        se_norm_sq: nsq.se(),
    })
}

/// Streaming mean/variance accumulator.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample_var(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn se(&self) -> f64 {
        if self.count > 0 {
            (self.sample_var() / self.count as f64).sqrt()
        } else {
            0.0
        }
    }
}

/// Which rows get stored. Running accumulators are updated every step
/// regardless; storage is a dense prefix, every `stride`-th step, all
/// checkpoint horizons, and the final step.
#[derive(Clone, Debug)]
pub struct StridePlan {
    pub stride: u64,
    pub dense_prefix: u64,
    pub horizons: Vec<u64>,
    pub t_final: u64,
}

impl StridePlan {
    pub fn should_record(&self, n: u64) -> bool {
        n <= self.dense_prefix
            || n.is_multiple_of(self.stride)
            || n == self.t_final
            || self.horizons.binary_search(&n).is_ok()
    }
}

/// Per-step sufficient-decrease residual statistics
/// (`ghat_{n+1} - ghat_n + (alpha0/4) zeta(n) - C1 Gamma_n - C2 Gamma_n / sqrt(S_n)`).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResidualStats {
    pub count: u64,
    pub mean: f64,
    pub se: f64,
}

/// Running extrema of the RMSProp schedule invariants over a trajectory.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct RmsPropInvariantStats {
    /// Max relative increase of the matched per-coordinate multiplier
    /// `eta_{t,i} = alpha_t / (sqrt(v_{t,i}) + eps)` between consecutive steps
    /// (compared from t = 2; nonpositive when monotone).
    pub max_eta_increase_rel: f64,
    /// Max relative deficit of `t v_{t,i}` against `r1 S_{t,i}`
    /// (nonpositive when the bound holds).
    pub max_energy_deficit_rel: f64,
}

enum Mode {
    AdaGrad {
        prev_ghat: Option<f64>,
        /// Max over steps of `ghat_{n+1} - ghat_n - h(ghat_n)`; nonpositive
        /// while the adjacent-step growth bound holds.
        max_adjacency_excess: f64,
    },
    Sgd {
        s: CompensatedScalar,
    },
    RmsProp {
        s_coord: Vec<CompensatedScalar>,
        s_total: CompensatedScalar,
        eta_prev: Vec<f64>,
        r1: f64,
        eps: f64,
        stats: RmsPropInvariantStats,
    },
}

struct PendingResidual {
    ghat: f64,
    zeta: f64,
    gamma: f64,
    s: f64,
}

/// Accumulates telemetry for one trajectory: strided rows, every-step running
/// sums, the `ghat` series, and decrease-residual statistics.
pub struct Recorder {
    params: LyapunovParams,
    plan: StridePlan,
    rows: Vec<StepRow>,
    invsqrt: CompensatedScalar,
    sum_grad_sq: CompensatedScalar,
    sup_g: f64,
    min_grad_sq: f64,
    ghat_series: Vec<f64>,
    residuals: Welford,
    pending: Option<PendingResidual>,
    n: u64,
    mode: Mode,
}

impl Recorder {
    pub fn for_adagrad(params: LyapunovParams, plan: StridePlan) -> Self {
        Self::new(
            params,
            plan,
            Mode::AdaGrad {
                prev_ghat: None,
                max_adjacency_excess: f64::NEG_INFINITY,
            },
        )
    }

    pub fn for_sgd(params: LyapunovParams, plan: StridePlan) -> Self {
        let s = CompensatedScalar::new(params.s0);
        Self::new(params, plan, Mode::Sgd { s })
    }

    pub fn for_rmsprop(params: LyapunovParams, plan: StridePlan, state: &RmsPropState) -> Self {
        let d = state.theta.dim();
        let eta0 = 1.0 / (state.v_init.sqrt() + state.eps);
        let mode = Mode::RmsProp {
            s_coord: vec![CompensatedScalar::new(state.v_init); d],
            s_total: CompensatedScalar::new(state.v_init * d as f64),
            eta_prev: vec![eta0; d],
            r1: state.r1(),
            eps: state.eps,
            stats: RmsPropInvariantStats {
                max_eta_increase_rel: f64::NEG_INFINITY,
                max_energy_deficit_rel: f64::NEG_INFINITY,
            },
        };
        Self::new(params, plan, mode)
    }

    fn new(params: LyapunovParams, plan: StridePlan, mode: Mode) -> Self {
        Recorder {
            params,
            plan,
            rows: Vec::new(),
            invsqrt: CompensatedScalar::default(),
            sum_grad_sq: CompensatedScalar::default(),
            sup_g: f64::NEG_INFINITY,
            min_grad_sq: f64::INFINITY,
            ghat_series: Vec::new(),
            residuals: Welford::default(),
            pending: None,
            n: 0,
            mode,
        }
    }

    /// Spec-level convenience: evaluates the true objective and gradient at
    /// the pre-step iterate itself, then records the transition.
    pub fn record_step_adagrad(
        &mut self,
        obj: &Objective,
        before: &AdaGradNormState,
        after: &AdaGradNormState,
        draw: &Vector,
    ) -> Result<StepRow> {
        let g = obj.eval(&before.theta)?;
        let grad = obj.grad(&before.theta)?;
        self.observe_adagrad(g, grad.norm_sq(), before, after, draw)
    }

    /// Records one AdaGrad-Norm transition given the already-evaluated true
    /// objective value and gradient energy at the pre-step iterate.
    pub fn observe_adagrad(
        &mut self,
        g: f64,
        grad_sq: f64,
        before: &AdaGradNormState,
        after: &AdaGradNormState,
        draw: &Vector,
    ) -> Result<StepRow> {
        let s_prev = before.s();
        let s = after.s();
        let zeta = grad_sq / s_prev.sqrt();
        let gamma = draw.norm_sq() / s;
        let ghat = self.params.ghat(g, zeta);
        let step_norm = after.theta.distance(&before.theta)?;
        let params = self.params;
        let Mode::AdaGrad {
            prev_ghat,
            max_adjacency_excess,
        } = &mut self.mode
        else {
            return Err(Error::Domain(
                "recorder not configured for AdaGrad-Norm".into(),
            ));
        };
        if let Some(prev) = prev_ghat {
            let excess = ghat - *prev - params.adjacency_h(*prev);
            *max_adjacency_excess = max_adjacency_excess.max(excess);
        }
        *prev_ghat = Some(ghat);
        self.close_residual(ghat);
        self.pending = Some(PendingResidual {
            ghat,
            zeta,
            gamma,
            s,
        });
        self.commit(g, grad_sq, s_prev, s, zeta, gamma, ghat, step_norm)
    }

    /// Records one SGD transition (diagnostic accumulator follows the same
    /// recurrence as AdaGrad's `S`; `ghat` is the raw objective).
    pub fn observe_sgd(
        &mut self,
        g: f64,
        grad_sq: f64,
        before: &SgdState,
        after: &SgdState,
        draw: &Vector,
    ) -> Result<StepRow> {
        let Mode::Sgd { s } = &mut self.mode else {
            return Err(Error::Domain("recorder not configured for SGD".into()));
        };
        let s_prev = s.value();
        *s = s.accumulate(draw.norm_sq())?;
        let s_now = s.value();
        let zeta = grad_sq / s_prev.sqrt();
        let gamma = draw.norm_sq() / s_now;
        let step_norm = after.theta.distance(&before.theta)?;
        self.commit(g, grad_sq, s_prev, s_now, zeta, gamma, g, step_norm)
    }

    /// Records one RMSProp transition; needs the full true gradient for the
    /// per-coordinate corrected objective.
    pub fn observe_rmsprop(
        &mut self,
        g: f64,
        grad: &Vector,
        before: &RmsPropState,
        after: &RmsPropState,
        draw: &Vector,
    ) -> Result<StepRow> {
        let t = before.t;
        let params = self.params;
        let Mode::RmsProp {
            s_coord,
            s_total,
            eta_prev,
            r1,
            eps,
            stats,
        } = &mut self.mode
        else {
            return Err(Error::Domain("recorder not configured for RMSProp".into()));
        };
        let d = grad.dim();
        let s_prev = s_total.value();
        let mut zeta = 0.0;
        let mut eta_prev_sum = 0.0;
        for i in 0..d {
            zeta += grad[i] * grad[i] * eta_prev[i];
            eta_prev_sum += eta_prev[i];
        }
        let ghat = g + zeta + 0.5 * params.sigma1 * eta_prev_sum;
        *s_total = s_total.accumulate(draw.norm_sq())?;
        let s_now = s_total.value();
        let alpha_t = 1.0 / (t as f64).sqrt();
        for i in 0..d {
            s_coord[i] = s_coord[i].accumulate(draw[i] * draw[i])?;
            let eta_t = alpha_t / (after.v[i].sqrt() + *eps);
            if t >= 2 {
                stats.max_eta_increase_rel = stats
                    .max_eta_increase_rel
                    .max((eta_t - eta_prev[i]) / eta_prev[i]);
            }
            let tv = t as f64 * after.v[i];
            let bound = *r1 * s_coord[i].value();
            stats.max_energy_deficit_rel = stats.max_energy_deficit_rel.max((bound - tv) / bound);
            eta_prev[i] = eta_t;
        }
        let gamma = draw.norm_sq() / s_now;
        let step_norm = after.theta.distance(&before.theta)?;
        self.commit(
            g,
            grad.norm_sq(),
            s_prev,
            s_now,
            zeta,
            gamma,
            ghat,
            step_norm,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn commit(
        &mut self,
        g: f64,
        grad_sq: f64,
        s_prev: f64,
        s: f64,
        zeta: f64,
        gamma: f64,
        ghat: f64,
        step_norm: f64,
    ) -> Result<StepRow> {
        self.n += 1;
        self.sum_grad_sq.add_unchecked(grad_sq);
        self.min_grad_sq = self.min_grad_sq.min(grad_sq);
        self.sup_g = self.sup_g.max(g);
        self.invsqrt.add_unchecked(1.0 / s.sqrt());
        self.ghat_series.push(ghat);
        let row = StepRow {
            n: self.n,
            g,
            grad_sq,
            s_prev,
            s,
            zeta,
            gamma,
            ghat,
            step_norm,
            invsqrt_s_partial: self.invsqrt.value(),
            running_sup_g: self.sup_g,
        };
        if self.plan.should_record(self.n) {
            self.rows.push(row);
        }
        Ok(row)
    }

    fn close_residual(&mut self, ghat_next: f64) {
        if let Some(prev) = self.pending.take() {
            let r = ghat_next - prev.ghat + 0.25 * self.params.alpha0 * prev.zeta
                - self.params.c_gamma_1() * prev.gamma
                - self.params.c_gamma_2() * prev.gamma / prev.s.sqrt();
            self.residuals.push(r);
        }
    }

    /// Closes the final decrease residual with the post-run iterate's true
    /// objective value and gradient energy.
    pub fn finish(&mut self, g_final: f64, grad_sq_final: f64) {
        if let Some(prev) = &self.pending {
            let zeta_next = grad_sq_final / prev.s.sqrt();
            let ghat_next = self.params.ghat(g_final, zeta_next);
            self.close_residual(ghat_next);
        }
    }

    pub fn steps(&self) -> u64 {
        self.n
    }

    pub fn rows(&self) -> &[StepRow] {
        &self.rows
    }

    pub fn sup_g(&self) -> f64 {
        self.sup_g
    }

    pub fn min_grad_sq(&self) -> f64 {
        self.min_grad_sq
    }

    pub fn sum_grad_sq(&self) -> f64 {
        self.sum_grad_sq.value()
    }

    pub fn invsqrt_partial(&self) -> f64 {
        self.invsqrt.value()
    }

    pub fn ghat_series(&self) -> &[f64] {
        &self.ghat_series
    }

    pub fn residual_stats(&self) -> ResidualStats {
        ResidualStats {
            count: self.residuals.count(),
            mean: self.residuals.mean(),
            se: self.residuals.se(),
        }
    }

    pub fn rmsprop_stats(&self) -> Option<RmsPropInvariantStats> {
        match &self.mode {
            Mode::RmsProp { stats, .. } => Some(*stats),
            _ => None,
        }
    }

    /// Max over recorded steps of `ghat_{n+1} - ghat_n - h(ghat_n)`
    /// (AdaGrad-Norm only); nonpositive while the growth bound holds.
    pub fn max_adjacency_excess(&self) -> Option<f64> {
        match &self.mode {
            Mode::AdaGrad {
                max_adjacency_excess,
                ..
            } => Some(*max_adjacency_excess),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::standard_normal;
    use crate::objectives::QuadraticSpec;
    use crate::optimizers::{adagrad_step, rmsprop_step};
    use crate::oracles::NoiseDist;

    fn params() -> LyapunovParams {
        LyapunovParams {
            sigma0: 1.0,
            sigma1: 10.0,
            alpha0: 1.0,
            s0: 1.0,
            l: 1.0,
        }
    }

    fn plan(t: u64) -> StridePlan {
        StridePlan {
            stride: 1,
            dense_prefix: 0,
            horizons: vec![],
            t_final: t,
        }
    }

    #[test]
    fn first_row_on_noiseless_quadratic_matches_hand_values() {
        let obj =
            Objective::Quadratic(QuadraticSpec::new(vec![1.0], Vector::zeros(1).unwrap()).unwrap());
        let st = AdaGradNormState::new(Vector::new(vec![2.0]).unwrap(), 1.0, 1.0).unwrap();
        let g = obj.grad(&st.theta).unwrap();
        let st2 = adagrad_step(st.clone(), &g).unwrap();
        let mut rec = Recorder::for_adagrad(params(), plan(10));
        let row = rec.record_step_adagrad(&obj, &st, &st2, &g).unwrap();
        assert_eq!(row.g, 2.0);
        assert_eq!(row.grad_sq, 4.0);
        assert_eq!(row.zeta, 4.0);
        assert_eq!(row.s, 5.0);
        assert_eq!(row.gamma, 4.0 / 5.0);
        // definitional identity ghat - g = (sigma0 alpha0 / 2) zeta
        assert_eq!(row.ghat - row.g, 0.5 * 1.0 * 1.0 * row.zeta);
    }

    #[test]
    fn zero_draw_keeps_s_and_gamma() {
        let obj =
            Objective::Quadratic(QuadraticSpec::new(vec![1.0], Vector::zeros(1).unwrap()).unwrap());
        let st = AdaGradNormState::new(Vector::new(vec![2.0]).unwrap(), 1.0, 4.0).unwrap();
        let zero = Vector::zeros(1).unwrap();
        let st2 = adagrad_step(st.clone(), &zero).unwrap();
        let mut rec = Recorder::for_adagrad(params(), plan(10));
        let row = rec.record_step_adagrad(&obj, &st, &st2, &zero).unwrap();
        assert_eq!(row.gamma, 0.0);
        assert_eq!(row.s, row.s_prev);
        assert_eq!(row.zeta, row.grad_sq / row.s_prev.sqrt());
    }

    #[test]
    fn gamma_stays_in_unit_interval_and_sums_below_log_bound() {
        let obj = Objective::Quadratic(
            QuadraticSpec::new(vec![1.0; 4], Vector::zeros(4).unwrap()).unwrap(),
        );
        let mut rng = RngStream::new(31, 0);
        let mut st = AdaGradNormState::new(Vector::filled(4, 3.0).unwrap(), 1.0, 1.0).unwrap();
        let mut rec = Recorder::for_adagrad(params(), plan(500));
        let mut gamma_sum = 0.0;
        for _ in 0..500 {
            let g = obj.eval(&st.theta).unwrap();
            let grad = obj.grad(&st.theta).unwrap();
            let mut draw = standard_normal(&mut rng, 4).unwrap().into_vec();
            for (d, &gr) in draw.iter_mut().zip(grad.as_slice()) {
                *d += gr;
            }
            let draw = Vector::new(draw).unwrap();
            let st2 = adagrad_step(st.clone(), &draw).unwrap();
            let row = rec
                .observe_adagrad(g, grad.norm_sq(), &st, &st2, &draw)
                .unwrap();
            assert!(row.gamma >= 0.0 && row.gamma <= 1.0);
            gamma_sum += row.gamma;
            st = st2;
        }
        let bound = (st.s() / 1.0).ln() + 1.0;
        assert!(gamma_sum <= bound, "{gamma_sum} > {bound}");
    }

    #[test]
    fn adjacency_bound_holds_along_noisy_run() {
        let obj = Objective::Quadratic(
            QuadraticSpec::new(vec![1.0; 3], Vector::zeros(3).unwrap()).unwrap(),
        );
        let p = LyapunovParams {
            sigma0: 1.0,
            sigma1: 3.0,
            alpha0: 1.0,
            s0: 1.0,
            l: 1.0,
        };
        let mut rng = RngStream::new(32, 0);
        let mut st = AdaGradNormState::new(Vector::filled(3, 2.0).unwrap(), 1.0, 1.0).unwrap();
        let mut rec = Recorder::for_adagrad(p, plan(2000));
        let mut prev_ghat: Option<f64> = None;
        for _ in 0..2000 {
            let g = obj.eval(&st.theta).unwrap();
            let grad = obj.grad(&st.theta).unwrap();
            let mut draw = standard_normal(&mut rng, 3).unwrap().into_vec();
            for (v, &gr) in draw.iter_mut().zip(grad.as_slice()) {
                *v += gr;
            }
            let draw = Vector::new(draw).unwrap();
            let st2 = adagrad_step(st.clone(), &draw).unwrap();
            let row = rec
                .observe_adagrad(g, grad.norm_sq(), &st, &st2, &draw)
                .unwrap();
            if let Some(ph) = prev_ghat {
                assert!(row.ghat - ph <= p.adjacency_h(ph) + 1e-9);
            }
            prev_ghat = Some(row.ghat);
            st = st2;
        }
    }

    #[test]
    fn segment_excursions_constant_below_threshold() {
        let log = segment_excursions(&[0.2, 0.3, 0.2], 1.0).unwrap();
        assert!(log.triples.is_empty());
        assert_eq!(log.overshoot_count, 0);
    }

    #[test]
    fn segment_excursions_with_overshoot() {
        let log = segment_excursions(&[0.5, 1.5, 2.5, 0.5], 1.0).unwrap();
        assert_eq!(log.triples, vec![(2, 3, 4)]);
        assert_eq!(log.overshoot_count, 1);
    }

    #[test]
    fn segment_excursions_degenerate_exit() {
        let log = segment_excursions(&[0.5, 1.5, 0.5], 1.0).unwrap();
        assert_eq!(log.triples, vec![(2, 3, 3)]);
        assert_eq!(log.overshoot_count, 0);
    }

    #[test]
    fn segment_excursions_truncates_open_excursion() {
        let log = segment_excursions(&[0.5, 1.5, 1.6], 1.0).unwrap();
        assert_eq!(log.triples, vec![(2, 3, 3)]);
        // series never returned below delta0; indices clamp at the end
    }

    #[test]
    fn segment_excursions_multiple_triples_are_monotone() {
        let series = [0.5, 1.5, 0.2, 2.5, 2.6, 0.1, 1.2, 0.9];
        let log = segment_excursions(&series, 1.0).unwrap();
        assert_eq!(log.triples, vec![(2, 3, 3), (4, 4, 6), (7, 8, 8)]);
        assert_eq!(log.overshoot_count, 1);
        let flat: Vec<u64> = log
            .triples
            .iter()
            .flat_map(|&(a, b, c)| [a, b, c])
            .collect();
        assert!(flat.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest::proptest! {
        #[test]
        fn excursion_triples_are_ordered_and_consistent(
            series in proptest::collection::vec(0.0f64..4.0, 1..200),
            delta0 in 0.5f64..2.0,
        ) {
            let log = segment_excursions(&series, delta0).unwrap();
            let flat: Vec<u64> =
                log.triples.iter().flat_map(|&(a, b, c)| [a, b, c]).collect();
            proptest::prop_assert!(flat.windows(2).all(|w| w[0] <= w[1]));
            proptest::prop_assert!(flat.iter().all(|&k| k >= 1 && k <= series.len() as u64));
            let overshoots =
                log.triples.iter().filter(|&&(_, b, c)| b < c).count() as u64;
            proptest::prop_assert_eq!(log.overshoot_count, overshoots);
            for &(t1, _, _) in &log.triples {
                proptest::prop_assert!(series[(t1 - 1) as usize] > delta0);
            }
        }
    }

    #[test]
    fn conditional_estimate_noiseless_is_exact() {
        let obj = Objective::Quadratic(
            QuadraticSpec::new(vec![1.0; 3], Vector::zeros(3).unwrap()).unwrap(),
        );
        let oracle = Oracle::multiplicative(0.0, NoiseDist::Rademacher).unwrap();
        let theta = Vector::filled(3, 1.5).unwrap();
        let mut rng = RngStream::new(33, 0);
        let est = estimate_conditional(&oracle, &obj, &theta, 100, &mut rng).unwrap();
        assert_eq!(est.mean_grad, obj.grad(&theta).unwrap());
        assert!(est.se_norm_sq <= 1e-12);
    }

    #[test]
    fn conditional_estimate_additive_energy() {
        let d = 10;
        let obj = Objective::Quadratic(
            QuadraticSpec::new(vec![1.0; d], Vector::zeros(d).unwrap()).unwrap(),
        );
        let oracle = Oracle::additive_gaussian(1.0, d).unwrap();
        let theta = Vector::filled(d, 0.3).unwrap();
        let mut rng = RngStream::new(34, 0);
        let est = estimate_conditional(&oracle, &obj, &theta, 20_000, &mut rng).unwrap();
        let expected = obj.grad(&theta).unwrap().norm_sq() + d as f64;
        assert!((est.mean_norm_sq - expected).abs() <= 4.0 * est.se_norm_sq);
    }

    #[test]
    fn conditional_estimate_uses_its_own_stream() {
        let obj = Objective::Quadratic(
            QuadraticSpec::new(vec![1.0; 2], Vector::zeros(2).unwrap()).unwrap(),
        );
        let oracle = Oracle::additive_gaussian(1.0, 2).unwrap();
        let theta = Vector::filled(2, 1.0).unwrap();
        let a =
            estimate_conditional(&oracle, &obj, &theta, 500, &mut RngStream::new(9, 100)).unwrap();
        let b =
            estimate_conditional(&oracle, &obj, &theta, 500, &mut RngStream::new(9, 100)).unwrap();
        assert_eq!(a.mean_norm_sq, b.mean_norm_sq);
    }

    #[test]
    fn lambda_is_between_half_gamma_and_gamma() {
        let row = StepRow {
            n: 1,
            g: 1.0,
            grad_sq: 2.0,
            s_prev: 3.0,
            s: 5.0,
            zeta: 2.0 / 3.0_f64.sqrt(),
            gamma: 2.0 / 5.0,
            ghat: 0.0,
            step_norm: 0.0,
            invsqrt_s_partial: 0.0,
            running_sup_g: 0.0,
        };
        let lam = row.lambda();
        assert!(lam <= row.gamma && lam >= row.gamma / 2.0);
        // direct form |G|^2 / (sqrt(S) (sqrt(S_prev) + sqrt(S)))
        let direct = 2.0 / (5.0_f64.sqrt() * (3.0_f64.sqrt() + 5.0_f64.sqrt()));
        assert!((lam - direct).abs() <= 1e-15);
    }

    #[test]
    fn csv_roundtrip_is_shortest_decimal() {
        let row = StepRow {
            n: 7,
            g: 0.1,
            grad_sq: 1.0 / 3.0,
            s_prev: 1e12 + 0.125,
            s: 5.0,
            zeta: f64::MIN_POSITIVE,
            gamma: 0.8,
            ghat: 2.5,
            step_norm: 1e-300,
            invsqrt_s_partial: 147.0,
            running_sup_g: 510.87,
        };
        let line = row.to_csv_line();
        let parsed = StepRow::parse_csv_line(&line).unwrap();
        assert_eq!(parsed, row);
    }

    #[test]
    fn rmsprop_recorder_tracks_schedule_invariants() {
        let obj = Objective::Quadratic(
            QuadraticSpec::new(vec![1.0, 4.0], Vector::zeros(2).unwrap()).unwrap(),
        );
        let mut rng = RngStream::new(35, 0);
        let mut st = RmsPropState::new(Vector::filled(2, 3.0).unwrap(), 0.9, 1e-8, 1e-6).unwrap();
        let p = LyapunovParams {
            sigma0: 1.0,
            sigma1: 0.0,
            alpha0: 1.0,
            s0: 1e-6,
            l: 4.0,
        };
        let mut rec = Recorder::for_rmsprop(p, plan(300), &st);
        for _ in 0..300 {
            let g = obj.eval(&st.theta).unwrap();
            let grad = obj.grad(&st.theta).unwrap();
            let mut draw = standard_normal(&mut rng, 2).unwrap().into_vec();
            for (v, &gr) in draw.iter_mut().zip(grad.as_slice()) {
                *v = gr + 0.5 * *v;
            }
            let draw = Vector::new(draw).unwrap();
            let st2 = rmsprop_step(st.clone(), &draw).unwrap();
            rec.observe_rmsprop(g, &grad, &st, &st2, &draw).unwrap();
            st = st2;
        }
        let stats = rec.rmsprop_stats().unwrap();
        assert!(stats.max_eta_increase_rel <= 1e-9, "{stats:?}");
        assert!(stats.max_energy_deficit_rel <= 1e-9, "{stats:?}");
    }
}
