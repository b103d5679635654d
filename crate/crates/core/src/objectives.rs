//! Smooth, non-negative, coercive test objectives with analytic gradients and
//! declared constants, so every run's hypotheses are certified rather than
//! assumed.
//!
//! All three families are coercive and have gradients that grow without bound
//! at infinity, and each declares a closed-form upper bound `L` on the
//! gradient's Lipschitz constant together with a lower bound `g*` on its
//! infimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{standard_normal, CompensatedScalar, RngStream, Vector};

/// Quadratic bowl `g(x) = 1/2 sum_i lam_i (x_i - m_i)^2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub eigenvalues: Vec<f64>,
    pub minimizer: Vector,
}

/// Separable non-convex well `g(x) = sum_i [x_i^2/2 + a (1 + cos(b x_i))]`.
///
/// With `a b^2 > 1` the origin is a strict local maximum per coordinate, so
/// interior non-minimizing critical points (saddles in d >= 2) exist while
/// the function stays coercive with gradient growing at infinity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CosineWellSpec {
    pub dim: usize,
    pub a: f64,
    pub b: f64,
    /// Per-coordinate minimum value, solved at construction.
    gstar_per_coord: f64,
    /// Positive per-coordinate minimizer, solved at construction.
    xstar: f64,
}

/// Ridge-regularized logistic loss over a synthetic dataset,
/// `g(x) = 1/N sum_i ln(1 + exp(-y_i <f_i, x>)) + ridge/2 |x|^2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogisticL2Spec {
    /// Row-major N x d feature matrix.
    features: Vec<f64>,
    labels: Vec<f64>,
    pub ridge: f64,
    pub n_samples: usize,
    pub dim: usize,
    max_row_norm_sq: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Objective {
    Quadratic(QuadraticSpec),
    CosineWell(CosineWellSpec),
    LogisticL2(LogisticL2Spec),
}

impl QuadraticSpec {
    pub fn new(eigenvalues: Vec<f64>, minimizer: Vector) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Domain(
                "quadratic eigenvalues must be positive".into(),
            ));
        }
        minimizer.check_dim(eigenvalues.len())?;
        Ok(QuadraticSpec {
            eigenvalues,
            minimizer,
        })
    }
}

impl CosineWellSpec {
    pub fn new(dim: usize, a: f64, b: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("cosine well dimension must be >= 1".into()));
        }
        if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain("cosine well requires a > 0 and b > 0".into()));
        }
        if a * b * b <= 1.0 {
            return Err(Error::Domain(format!(
                "cosine well requires a*b^2 > 1 for non-convexity, got {}",
                a * b * b
            )));
        }
        let (xstar, gstar_per_coord) = cosine_well_minimum(a, b);
        Ok(CosineWellSpec {
            dim,
            a,
            b,
            gstar_per_coord,
            xstar,
        })
    }

    /// Positive per-coordinate minimizer.
    pub fn xstar(&self) -> f64 {
        self.xstar
    }

    /// Second derivative of the per-coordinate well at `x`.
    pub fn hessian_diag_at(&self, x: f64) -> f64 {
        1.0 - self.a * self.b * self.b * libm::cos(self.b * x)
    }
}

/// Solves the positive per-coordinate critical point `x = a b sin(b x)` of
/// the cosine well by guarded Newton with a bisection fallback on `(0, pi/b]`
/// and returns `(x*, well value at x*)`.
///
/// Working variable is `y = b x`, root of `phi(y) = y - a b^2 sin(y)` in
/// `(0, pi)`; the bracket is valid because `phi(0+) < 0` when `a b^2 > 1`
/// and `phi(pi) = pi > 0`.
fn cosine_well_minimum(a: f64, b: f64) -> (f64, f64) {
    let c = a * b * b;
    let phi = |y: f64| y - c * libm::sin(y);
    let dphi = |y: f64| 1.0 - c * libm::cos(y);
    let (mut lo, mut hi) = (1e-9, std::f64::consts::PI);
    debug_assert!(phi(lo) < 0.0 && phi(hi) > 0.0);
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = phi(y);
        if f.abs() <= 1e-12 {
            break;
        }
        if f < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let d = dphi(y);
        let newton = y - f / d;
        y = if d.abs() > 1e-14 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let xstar = y / b;
    let value = 0.5 * xstar * xstar + a * (1.0 + libm::cos(y));
    (xstar, value)
}

/// Numerically stable `ln(1 + exp(t))`.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + libm::log1p(libm::exp(-t))
    } else {
        libm::log1p(libm::exp(t))
    }
}

/// Numerically stable logistic function.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

/// Stream id reserved for synthetic dataset generation.
pub const DATA_STREAM_ID: u64 = 1 << 48;

impl LogisticL2Spec {
    /// Generates a self-contained synthetic dataset: Gaussian features, a
    /// planted unit-norm separator, and labels flipped with probability
    /// `noise_rate`.
    pub fn synthetic(
        n_samples: usize,
        dim: usize,
        noise_rate: f64,
        ridge: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_samples == 0 || dim == 0 {
            return Err(Error::Domain(
                "logistic data needs n >= 1 and d >= 1".into(),
            ));
        }
        if !(ridge > 0.0) {
            return Err(Error::Domain("logistic ridge weight must be > 0".into()));
        }
        if !(0.0..=0.5).contains(&noise_rate) {
            return Err(Error::Domain("label noise rate must be in [0, 0.5]".into()));
        }
        let mut rng = RngStream::new(seed, DATA_STREAM_ID);
        let mut features = vec![0.0; n_samples * dim];
        rng.fill_standard_normal(&mut features);
        let sep = standard_normal(&mut rng, dim)?;
        let sep_norm = sep.norm_sq().sqrt();
        let mut labels = Vec::with_capacity(n_samples);
        let mut max_row_norm_sq: f64 = 0.0;
        for i in 0..n_samples {
            let row = &features[i * dim..(i + 1) * dim];
            let score: f64 = row
                .iter()
                .zip(sep.as_slice())
                .map(|(x, w)| x * w / sep_norm)
                .sum();
            let mut y = if score >= 0.0 { 1.0 } else { -1.0 };
            if rng.uniform_open01() < noise_rate {
                y = -y;
            }
            labels.push(y);
            max_row_norm_sq = max_row_norm_sq.max(row.iter().map(|x| x * x).sum());
        }
        Ok(LogisticL2Spec {
            features,
            labels,
            ridge,
            n_samples,
            dim,
            max_row_norm_sq,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn margin(&self, i: usize, theta: &Vector) -> f64 {
        self.row(i)
            .iter()
            .zip(theta.as_slice())
            .map(|(x, t)| x * t)
            .sum()
    }

    pub(crate) fn labels_at(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub(crate) fn row_at(&self, i: usize) -> &[f64] {
        self.row(i)
    }

    pub(crate) fn sigmoid_neg_margin(&self, i: usize, theta: &Vector) -> f64 {
        sigmoid(-self.labels[i] * self.margin(i, theta))
    }

    /// Gradient of the i-th per-sample loss (ridge term included, so the
    /// average over all samples is the full gradient).
    pub fn per_sample_grad(&self, i: usize, theta: &Vector) -> Result<Vector> {
        theta.check_dim(self.dim)?;
        let y = self.labels[i];
        let coef = -y * sigmoid(-y * self.margin(i, theta));
        let out: Vec<f64> = self
            .row(i)
            .iter()
            .zip(theta.as_slice())
            .map(|(x, t)| coef * x + self.ridge * t)
            .collect();
        Vector::new(out)
    }
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.eigenvalues.len(),
            Objective::CosineWell(c) => c.dim,
            Objective::LogisticL2(l) => l.dim,
        }
    }

    /// Upper bound on the Lipschitz constant of the gradient.
    pub fn declared_l(&self) -> f64 {
        match self {
            Objective::Quadratic(q) => q.eigenvalues.iter().cloned().fold(0.0, f64::max),
            Objective::CosineWell(c) => 1.0 + c.a * c.b * c.b,
            Objective::LogisticL2(l) => 0.25 * l.max_row_norm_sq + l.ridge,
        }
    }

    /// Lower bound on the global infimum (tight for the quadratic and cosine
    /// families; a valid bound of 0 for the logistic family).
    pub fn declared_gstar(&self) -> f64 {
        match self {
            Objective::Quadratic(_) => 0.0,
            Objective::CosineWell(c) => c.gstar_per_coord * c.dim as f64,
            Objective::LogisticL2(_) => 0.0,
        }
    }

    pub fn coercive(&self) -> bool {
        true
    }

    /// Gradient norm stays bounded away from zero at infinity for all three
    /// families (quadratic growth or an explicit ridge term).
    pub fn nonflat(&self) -> bool {
        true
    }

    /// Number of summands when the objective is a finite sum.
    pub fn finite_sum_len(&self) -> Option<usize> {
        match self {
            Objective::LogisticL2(l) => Some(l.n_samples),
            _ => None,
        }
    }

    pub fn eval(&self, theta: &Vector) -> Result<f64> {
        theta.check_dim(self.dim())?;
        let value = match self {
            Objective::Quadratic(q) => {
                let mut acc = CompensatedScalar::default();
                for (i, &lam) in q.eigenvalues.iter().enumerate() {
                    let d = theta[i] - q.minimizer[i];
                    acc.add_unchecked(0.5 * lam * d * d);
                }
                acc.value()
            }
            Objective::CosineWell(c) => {
                let mut acc = CompensatedScalar::default();
                for &x in theta.as_slice() {
                    acc.add_unchecked(0.5 * x * x + c.a * (1.0 + libm::cos(c.b * x)));
                }
                acc.value()
            }
            Objective::LogisticL2(l) => {
                let mut acc = CompensatedScalar::default();
                for i in 0..l.n_samples {
                    acc.add_unchecked(softplus(-l.labels[i] * l.margin(i, theta)));
                }
                let mut out = acc.value() / l.n_samples as f64;
                out += 0.5 * l.ridge * theta.norm_sq();
                out
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "objective value",
            });
        }
        Ok(value)
    }

    pub fn grad(&self, theta: &Vector) -> Result<Vector> {
        theta.check_dim(self.dim())?;
        match self {
            Objective::Quadratic(q) => {
                let out: Vec<f64> = q
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .map(|(i, &lam)| lam * (theta[i] - q.minimizer[i]))
                    .collect();
                Vector::new(out)
            }
            Objective::CosineWell(c) => {
                let out: Vec<f64> = theta
                    .as_slice()
                    .iter()
                    .map(|&x| x - c.a * c.b * libm::sin(c.b * x))
                    .collect();
                Vector::new(out)
            }
            Objective::LogisticL2(l) => {
                let mut out = vec![0.0; l.dim];
                for i in 0..l.n_samples {
                    let coef = -l.labels[i] * sigmoid(-l.labels[i] * l.margin(i, theta));
                    for (o, &x) in out.iter_mut().zip(l.row(i)) {
                        *o += coef * x;
                    }
                }
                let n = l.n_samples as f64;
                for (o, &t) in out.iter_mut().zip(theta.as_slice()) {
                    *o = *o / n + l.ridge * t;
                }
                Vector::new(out)
            }
        }
    }
}

/// Result of the empirical smoothness certification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothnessCertificate {
    pub l_hat: f64,
    pub declared_l: f64,
    pub pairs: usize,
    pub radius: f64,
    pub ok: bool,
}

/// Estimates the gradient's Lipschitz constant as the max difference quotient
/// over sampled pairs in the origin-centered ball of the given radius, and
/// checks it against the declared bound (1e-6 relative headroom for rounding).
pub fn certify_smoothness(
    obj: &Objective,
    rng: &mut RngStream,
    pairs: usize,
    radius: f64,
) -> Result<SmoothnessCertificate> {
    if pairs == 0 {
        return Err(Error::Domain(
            "certify_smoothness requires pairs >= 1".into(),
        ));
    }
    if !(radius > 0.0) {
        return Err(Error::Domain(
            "certify_smoothness requires radius > 0".into(),
        ));
    }
    let d = obj.dim();
    let mut l_hat: f64 = 0.0;
    let mut done = 0;
    while done < pairs {
        let x = sample_in_ball(rng, d, radius)?;
        let y = sample_in_ball(rng, d, radius)?;
        let dist = x.distance(&y)?;
        if dist == 0.0 {
            // coincident pair: resample rather than divide by zero
            continue;
        }
        let gdist = obj.grad(&x)?.distance(&obj.grad(&y)?)?;
        l_hat = l_hat.max(gdist / dist);
        done += 1;
    }
    let declared_l = obj.declared_l();
    Ok(SmoothnessCertificate {
        l_hat,
        declared_l,
        pairs,
        radius,
        ok: l_hat <= declared_l * (1.0 + 1e-6),
    })
}

fn sample_in_ball(rng: &mut RngStream, dim: usize, radius: f64) -> Result<Vector> {
    let dir = standard_normal(rng, dim)?;
    let norm = dir.norm_sq().sqrt();
    let r = radius * libm::pow(rng.uniform_open01(), 1.0 / dim as f64);
    if norm == 0.0 {
        return Vector::zeros(dim);
    }
    Vector::new(dir.as_slice().iter().map(|&z| z / norm * r).collect())
}

/// Central finite-difference probe of the analytic gradient; returns the
/// norm-relative deviation.
pub fn finite_difference_deviation(obj: &Objective, theta: &Vector, h: f64) -> Result<f64> {
    let analytic = obj.grad(theta)?;
    let mut fd = vec![0.0; theta.dim()];
    for i in 0..theta.dim() {
        let mut plus = theta.as_slice().to_vec();
        let mut minus = plus.clone();
        plus[i] += h;
        minus[i] -= h;
        fd[i] = (obj.eval(&Vector::new(plus)?)? - obj.eval(&Vector::new(minus)?)?) / (2.0 * h);
    }
    let fd = Vector::new(fd)?;
    let denom = analytic.norm_sq().sqrt().max(1.0);
    Ok(analytic.distance(&fd)? / denom)
}

/// Log-spaced eigenvalue ladder on `[lo, hi]`.
pub fn log_spaced(dim: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if dim == 0 || !(lo > 0.0) || !(hi >= lo) {
        return Err(Error::Domain(
            "log_spaced requires dim >= 1 and 0 < lo <= hi".into(),
        ));
    }
    if dim == 1 {
        return Ok(vec![hi]);
    }
    Ok((0..dim)
        .map(|i| lo * libm::pow(hi / lo, i as f64 / (dim - 1) as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_identity(d: usize) -> Objective {
        Objective::Quadratic(QuadraticSpec::new(vec![1.0; d], Vector::zeros(d).unwrap()).unwrap())
    }

    fn cosine(d: usize) -> Objective {
        Objective::CosineWell(CosineWellSpec::new(d, 2.0, 1.0).unwrap())
    }

    fn logistic() -> Objective {
        Objective::LogisticL2(LogisticL2Spec::synthetic(64, 5, 0.1, 0.1, 99).unwrap())
    }

    #[test]
    fn quadratic_eval_and_grad() {
        let obj = quad_identity(2);
        let theta = Vector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(obj.eval(&theta).unwrap(), 12.5);
        assert_eq!(obj.grad(&theta).unwrap().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn cosine_eval_grad_at_origin() {
        let obj = cosine(1);
        let theta = Vector::zeros(1).unwrap();
        assert_eq!(obj.eval(&theta).unwrap(), 4.0);
        assert_eq!(obj.grad(&theta).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn cosine_minimum_matches_newton_solve() {
        // positive root of x = 2 sin x
        let (xstar, w) = cosine_well_minimum(2.0, 1.0);
        assert!((xstar - 1.8955).abs() < 1e-3, "xstar {xstar}");
        assert!((xstar - 2.0 * libm::sin(xstar)).abs() <= 1e-11);
        let obj = cosine(3);
        assert!((obj.declared_gstar() - 3.0 * w).abs() <= 1e-12);
        // evaluating at the minimizer hits the declared infimum
        let theta = Vector::filled(3, xstar).unwrap();
        let g = obj.eval(&theta).unwrap();
        assert!((g - obj.declared_gstar()).abs() <= 1e-10);
    }

    #[test]
    fn cosine_origin_is_uphill() {
        let spec = CosineWellSpec::new(2, 2.0, 1.0).unwrap();
        assert_eq!(spec.hessian_diag_at(0.0), 1.0 - 2.0);
        assert!(spec.hessian_diag_at(0.0) < 0.0);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let obj = quad_identity(3);
        let theta = Vector::zeros(2).unwrap();
        assert!(matches!(
            obj.eval(&theta),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            obj.grad(&theta),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(5, 0);
        for obj in [quad_identity(6), cosine(6), logistic()] {
            for _ in 0..20 {
                let theta = standard_normal(&mut rng, obj.dim()).unwrap();
                let dev = finite_difference_deviation(&obj, &theta, 1e-5).unwrap();
                assert!(dev <= 1e-6, "fd deviation {dev}");
            }
        }
    }

    #[test]
    fn gradient_norm_bounded_by_suboptimality() {
        let mut rng = RngStream::new(6, 0);
        for obj in [quad_identity(4), cosine(4), logistic()] {
            let l = obj.declared_l();
            let gstar = obj.declared_gstar();
            for _ in 0..1000 {
                let theta = standard_normal(&mut rng, obj.dim()).unwrap();
                let g = obj.eval(&theta).unwrap();
                assert!(g >= gstar);
                let gsq = obj.grad(&theta).unwrap().norm_sq();
                assert!(
                    gsq <= 2.0 * l * (g - gstar) + 1e-9,
                    "gsq {gsq} vs {}",
                    2.0 * l * (g - gstar)
                );
            }
        }
    }

    #[test]
    fn descent_lemma_holds_on_sampled_pairs() {
        let mut rng = RngStream::new(7, 0);
        for obj in [quad_identity(4), cosine(4), logistic()] {
            let l = obj.declared_l();
            for _ in 0..1000 {
                let x = standard_normal(&mut rng, obj.dim()).unwrap();
                let y = standard_normal(&mut rng, obj.dim()).unwrap();
                let diff: Vec<f64> = y
                    .as_slice()
                    .iter()
                    .zip(x.as_slice())
                    .map(|(b, a)| b - a)
                    .collect();
                let diff = Vector::new(diff).unwrap();
                let lhs = obj.eval(&y).unwrap();
                let rhs = obj.eval(&x).unwrap()
                    + obj.grad(&x).unwrap().dot(&diff).unwrap()
                    + 0.5 * l * diff.norm_sq();
                assert!(lhs <= rhs + 1e-9, "descent lemma violated: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn certify_smoothness_anisotropic_quadratic() {
        let obj = Objective::Quadratic(
            QuadraticSpec::new(vec![1.0, 10.0], Vector::zeros(2).unwrap()).unwrap(),
        );
        let mut rng = RngStream::new(8, 0);
        let cert = certify_smoothness(&obj, &mut rng, 10_000, 10.0).unwrap();
        assert!(cert.ok);
        assert!(
            cert.l_hat > 9.0 && cert.l_hat <= 10.0,
            "l_hat {}",
            cert.l_hat
        );
    }

    #[test]
    fn certify_smoothness_identity_quadratic_is_exact() {
        let obj = quad_identity(3);
        let mut rng = RngStream::new(9, 0);
        let cert = certify_smoothness(&obj, &mut rng, 100, 5.0).unwrap();
        assert_eq!(cert.l_hat, 1.0);
    }

    #[test]
    fn certify_smoothness_cosine_within_declared() {
        let obj = cosine(2);
        let mut rng = RngStream::new(10, 0);
        let cert = certify_smoothness(&obj, &mut rng, 5_000, 10.0).unwrap();
        assert!(cert.ok);
        assert!(cert.l_hat <= 3.0 + 1e-9, "l_hat {}", cert.l_hat);
    }

    #[test]
    fn log_spaced_ladder() {
        let l = log_spaced(10, 1.0, 10.0).unwrap();
        assert_eq!(l.len(), 10);
        assert!((l[0] - 1.0).abs() < 1e-15);
        assert!((l[9] - 10.0).abs() < 1e-12);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn synthetic_logistic_is_reproducible() {
        let a = LogisticL2Spec::synthetic(32, 4, 0.1, 0.05, 7).unwrap();
        let b = LogisticL2Spec::synthetic(32, 4, 0.1, 0.05, 7).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        assert!(a.labels.iter().all(|&y| y == 1.0 || y == -1.0));
    }

    #[test]
    fn per_sample_grads_average_to_full_gradient() {
        let spec = LogisticL2Spec::synthetic(48, 5, 0.1, 0.1, 3).unwrap();
        let obj = Objective::LogisticL2(spec.clone());
        let theta = standard_normal(&mut RngStream::new(4, 0), 5).unwrap();
        let mut avg = [0.0; 5];
        for i in 0..48 {
            let g = spec.per_sample_grad(i, &theta).unwrap();
            for (a, &v) in avg.iter_mut().zip(g.as_slice()) {
                *a += v / 48.0;
            }
        }
        let full = obj.grad(&theta).unwrap();
        for (a, f) in avg.iter().zip(full.as_slice()) {
            assert!((a - f).abs() <= 1e-12, "{a} vs {f}");
        }
    }
}
