//! Pure state-transition implementations of the three steppers: AdaGrad-Norm
//! (single adaptive step size driven by the running sum of squared stochastic
//! gradient norms), coordinated RMSProp on its analyzed schedule, and a
//! Robbins-Monro SGD baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CompensatedScalar, Vector};

/// AdaGrad-Norm:
/// `S_n = S_{n-1} + |G_n|^2`, `theta_{n+1} = theta_n - alpha0 / sqrt(S_n) * G_n`.
///
/// The accumulator includes the current draw before the division; the delayed
/// variant that divides by `S_{n-1}` is a different algorithm and is not
/// provided.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaGradNormState {
    pub theta: Vector,
    s: CompensatedScalar,
    pub n: u64,
    pub alpha0: f64,
    pub s0: f64,
}

impl AdaGradNormState {
    pub fn new(theta: Vector, alpha0: f64, s0: f64) -> Result<Self> {
        if !(alpha0 > 0.0) || !alpha0.is_finite() {
            return Err(Error::Domain("alpha0 must be positive".into()));
        }
        if !(s0 > 0.0) || !s0.is_finite() {
            return Err(Error::Domain("S0 must be positive".into()));
        }
        Ok(AdaGradNormState {
            theta,
            s: CompensatedScalar::new(s0),
            n: 0,
            alpha0,
            s0,
        })
    }

    /// Current accumulator value `S_n`.
    pub fn s(&self) -> f64 {
        self.s.value()
    }

    /// Multiplier that will divide the next draw, using the current `S` as
    /// the pre-update upper bound: `alpha0 / sqrt(S_n)`.
    pub fn effective_stepsize(&self) -> f64 {
        self.alpha0 / self.s().sqrt()
    }
}

pub fn adagrad_step(state: AdaGradNormState, g: &Vector) -> Result<AdaGradNormState> {
    let AdaGradNormState {
        theta,
        s,
        n,
        alpha0,
        s0,
    } = state;
    g.check_dim(theta.dim()).map_err(|e| abort(n + 1, e))?;
    let gsq = g.norm_sq();
    let s = s.accumulate(gsq).map_err(|e| abort(n + 1, e))?;
    let scale = alpha0 / s.value().sqrt();
    let theta = Vector::new(
        theta
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(&t, &gi)| t - scale * gi)
            .collect(),
    )
    .map_err(|e| abort(n + 1, e))?;
    Ok(AdaGradNormState {
        theta,
        s,
        n: n + 1,
        alpha0,
        s0,
    })
}

/// Schedule of the analyzed RMSProp configuration: `alpha_t = 1/sqrt(t)` and
/// `beta_t = 1 - 1/t` for `t >= 2`, with a free `beta_1` in `(0, 1)`.
pub fn rmsprop_schedule(t: u64, beta1: f64) -> (f64, f64) {
    debug_assert!(t >= 1);
    let beta = if t == 1 { beta1 } else { 1.0 - 1.0 / t as f64 };
    let alpha = 1.0 / (t as f64).sqrt();
    (beta, alpha)
}

/// Coordinated RMSProp:
/// `v_{t,i} = beta_t v_{t-1,i} + (1-beta_t) G_{t,i}^2`,
/// `theta_{t+1,i} = theta_{t,i} - alpha_t / (sqrt(v_{t,i}) + eps) * G_{t,i}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RmsPropState {
    pub theta: Vector,
    pub v: Vector,
    /// Index of the step this state is about to produce (1 on entry to the
    /// first step).
    pub t: u64,
    pub v_init: f64,
    pub eps: f64,
    pub beta1: f64,
}

impl RmsPropState {
    pub fn new(theta: Vector, beta1: f64, eps: f64, v_init: f64) -> Result<Self> {
        if !(beta1 > 0.0 && beta1 < 1.0) {
            return Err(Error::Domain("beta1 must lie in (0, 1)".into()));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain("eps must be positive".into()));
        }
        if !(v_init > 0.0) || !v_init.is_finite() {
            return Err(Error::Domain("v_init must be positive".into()));
        }
        let v = Vector::filled(theta.dim(), v_init)?;
        Ok(RmsPropState {
            theta,
            v,
            t: 1,
            v_init,
            eps,
            beta1,
        })
    }

    /// `min(beta1, 1 - beta1)`; relates `t * v_t` to the raw running energy.
    pub fn r1(&self) -> f64 {
        self.beta1.min(1.0 - self.beta1)
    }

    /// Per-coordinate multiplier for the pending step,
    /// `alpha_t / (sqrt(v_i) + eps)` with the current `v`.
    pub fn effective_stepsize(&self) -> Vector {
        let alpha = 1.0 / (self.t as f64).sqrt();
        Vector::new(
            self.v
                .as_slice()
                .iter()
                .map(|&vi| alpha / (vi.sqrt() + self.eps))
                .collect(),
        )
        .expect("v stays positive")
    }
}

pub fn rmsprop_step(state: RmsPropState, g: &Vector) -> Result<RmsPropState> {
    let RmsPropState {
        theta,
        v,
        t,
        v_init,
        eps,
        beta1,
    } = state;
    g.check_dim(theta.dim()).map_err(|e| abort(t, e))?;
    let (beta, alpha) = rmsprop_schedule(t, beta1);
    let v = Vector::new(
        v.as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(&vi, &gi)| beta * vi + (1.0 - beta) * gi * gi)
            .collect(),
    )
    .map_err(|e| abort(t, e))?;
    let theta = Vector::new(
        theta
            .as_slice()
            .iter()
            .zip(g.as_slice().iter().zip(v.as_slice()))
            .map(|(&ti, (&gi, &vi))| ti - alpha * gi / (vi.sqrt() + eps))
            .collect(),
    )
    .map_err(|e| abort(t, e))?;
    Ok(RmsPropState {
        theta,
        v,
        t: t + 1,
        v_init,
        eps,
        beta1,
    })
}

/// Robbins-Monro step-size schedule `alpha_n = c / (n + offset)`
/// (divergent sum, convergent squared sum).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RobbinsMonro {
    pub c: f64,
    pub offset: f64,
}

impl RobbinsMonro {
    pub fn stepsize(&self, n: u64) -> f64 {
        self.c / (n as f64 + self.offset)
    }
}

/// Plain SGD baseline with a Robbins-Monro schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SgdState {
    pub theta: Vector,
    pub n: u64,
    pub schedule: RobbinsMonro,
}

impl SgdState {
    pub fn new(theta: Vector, c: f64, offset: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() || !(offset >= 0.0) || !offset.is_finite() {
            return Err(Error::Domain(
                "SGD schedule requires c > 0 and offset >= 0".into(),
            ));
        }
        Ok(SgdState {
            theta,
            n: 1,
            schedule: RobbinsMonro { c, offset },
        })
    }

    pub fn effective_stepsize(&self) -> f64 {
        self.schedule.stepsize(self.n)
    }
}

pub fn sgd_step(state: SgdState, g: &Vector) -> Result<SgdState> {
    let SgdState { theta, n, schedule } = state;
    g.check_dim(theta.dim()).map_err(|e| abort(n, e))?;
    let alpha = schedule.stepsize(n);
    let theta = Vector::new(
        theta
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(&t, &gi)| t - alpha * gi)
            .collect(),
    )
    .map_err(|e| abort(n, e))?;
    Ok(SgdState {
        theta,
        n: n + 1,
        schedule,
    })
}

fn abort(step: u64, cause: Error) -> Error {
    Error::TrajectoryAbort {
        step,
        reason: cause.to_string(),
    }
}
