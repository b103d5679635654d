//! Deterministic numeric primitives shared by every other module: dense
//! vectors, compensated accumulation, and counter-based seeded randomness.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real coordinate vector. Components are finite by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("vector dimension must be >= 1".into()));
        }
        if !components.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                context: "vector component",
            });
        }
        Ok(Vector(components))
    }

    pub fn filled(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::filled(dim, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Sum of squared components, compensated so that the result stays within
    /// one rounding of the exact sum even for 10^3+ terms.
    pub fn norm_sq(&self) -> f64 {
        let mut acc = CompensatedScalar::default();
        for &x in &self.0 {
            acc.add_unchecked(x * x);
        }
        acc.value()
    }

    /// Compensated dot product. `norm_sq(v)` equals `v.dot(v)` exactly.
    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.check_dim(other.dim())?;
        let mut acc = CompensatedScalar::default();
        for (&a, &b) in self.0.iter().zip(&other.0) {
            acc.add_unchecked(a * b);
        }
        Ok(acc.value())
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Vector) -> Result<f64> {
        self.check_dim(other.dim())?;
        let mut acc = CompensatedScalar::default();
        for (&a, &b) in self.0.iter().zip(&other.0) {
            let d = a - b;
            acc.add_unchecked(d * d);
        }
        Ok(acc.value().sqrt())
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Neumaier-compensated scalar accumulator.
///
/// Used for every long-running sum whose late increments are many orders of
/// magnitude below the running total (the step-size denominators grow without
/// bound on noisy runs while their increments stay O(1)).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedScalar {
    sum: f64,
    compensation: f64,
}

impl CompensatedScalar {
    pub fn new(value: f64) -> Self {
        CompensatedScalar {
            sum: value,
            compensation: 0.0,
        }
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    /// Adds a nonnegative finite increment; the logical value is monotone
    /// non-decreasing under this operation.
    pub fn accumulate(mut self, x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: "accumulate increment",
            });
        }
        if x < 0.0 {
            return Err(Error::Domain(format!(
                "accumulate requires x >= 0, got {x}"
            )));
        }
        self.add_unchecked(x);
        Ok(self)
    }

    pub(crate) fn add_unchecked(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }
}

const TWO_POW_NEG53: f64 = 1.0 / (1u64 << 53) as f64;

/// Counter-based seeded random stream.
///
/// Distinct `(seed, stream_id)` pairs index statistically independent streams
/// of one ChaCha8 generator family, so parallel trajectories get their own
/// stream without coordination. All derived draws go through fixed-ordering
/// arithmetic and `libm` transcendentals, which keeps the sequences
/// bit-reproducible across platforms and runs.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open01(&mut self) -> f64 {
        (((self.next_u64() >> 11) as f64) + 0.5) * TWO_POW_NEG53
    }

    /// Unbiased uniform integer in `[0, bound)` (Lemire rejection).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below requires bound > 0");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(bound);
            if m as u64 >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Rademacher draw: +1 or -1 with equal probability.
    pub fn rademacher(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Fills `out` with i.i.d. standard normal draws (Box-Muller pairs; each
    /// call consumes `2 * ceil(out.len() / 2)` uniforms, independent of any
    /// prior call pattern).
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let mut i = 0;
        while i < out.len() {
            let u1 = self.uniform_open01();
            let u2 = self.uniform_open01();
            let r = (-2.0 * libm::log(u1)).sqrt();
            let phi = std::f64::consts::TAU * u2;
            out[i] = r * libm::cos(phi);
            if i + 1 < out.len() {
                out[i + 1] = r * libm::sin(phi);
            }
            i += 2;
        }
    }

    pub fn standard_normal_scalar(&mut self) -> f64 {
        let mut buf = [0.0];
        self.fill_standard_normal(&mut buf);
        buf[0]
    }
}

/// `n` i.i.d. standard normal draws as a vector.
pub fn standard_normal(rng: &mut RngStream, n: usize) -> Result<Vector> {
    if n == 0 {
        return Err(Error::Domain("standard_normal requires n >= 1".into()));
    }
    let mut out = vec![0.0; n];
    rng.fill_standard_normal(&mut out);
    Vector::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norm_sq_trivial_values() {
        let v = Vector::new(vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.norm_sq(), 0.0);
        let v = Vector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.norm_sq(), 25.0);
    }

    #[test]
    fn norm_sq_thousand_tenths() {
        // exact rational sum: 1000 * 0.1^2 = 10
        let v = Vector::filled(1000, 0.1).unwrap();
        assert!((v.norm_sq() - 10.0).abs() <= 1e-12 * 10.0);
    }

    #[test]
    fn norm_sq_matches_dot() {
        let mut rng = RngStream::new(7, 0);
        let v = standard_normal(&mut rng, 257).unwrap();
        assert_eq!(v.norm_sq(), v.dot(&v).unwrap());
    }

    #[test]
    fn vector_rejects_non_finite_and_empty() {
        assert!(Vector::new(vec![]).is_err());
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn accumulate_small_exact_sums() {
        let acc = CompensatedScalar::new(1.0).accumulate(4.0).unwrap();
        assert_eq!(acc.value(), 5.0);
        let acc = CompensatedScalar::new(0.0).accumulate(0.0).unwrap();
        assert_eq!(acc.value(), 0.0);
    }

    #[test]
    fn accumulate_rejects_bad_increments() {
        assert!(CompensatedScalar::new(0.0).accumulate(-1.0).is_err());
        assert!(CompensatedScalar::new(0.0).accumulate(f64::NAN).is_err());
    }

    #[test]
    fn accumulate_huge_base_tiny_increments() {
        // 1e12 + 1e-4 * 1e4 = 1e12 + 1, compared against the exact value.
        let mut acc = CompensatedScalar::new(1e12);
        for _ in 0..10_000 {
            acc = acc.accumulate(1e-4).unwrap();
        }
        let exact = 1e12 + 1.0;
        assert!((acc.value() - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn accumulate_long_dynamic_range_vs_integer_reference() {
        // 10^7 addends k * 2^-20, summed exactly in i128; dynamic range
        // between the rare large and the common small addends is ~1e12.
        let mut rng = RngStream::new(11, 3);
        let mut acc = CompensatedScalar::default();
        let mut exact: i128 = 0;
        for i in 0..10_000_000u64 {
            let k = if i % 1000 == 0 {
                rng.next_below(1 << 51)
            } else {
                rng.next_below(1 << 11)
            };
            exact += k as i128;
            acc = acc.accumulate(k as f64 / (1u64 << 20) as f64).unwrap();
        }
        let exact = exact as f64 / (1u64 << 20) as f64;
        assert!((acc.value() - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn rng_is_reproducible_per_seed_and_stream() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 0);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngStream::new(1, 1);
        let different = (0..64).any(|_| a.next_u64() != c.next_u64());
        assert!(different, "distinct stream ids must decorrelate");
    }

    #[test]
    fn standard_normal_first_draw_deterministic() {
        let x = standard_normal(&mut RngStream::new(1, 0), 1).unwrap();
        let y = standard_normal(&mut RngStream::new(1, 0), 1).unwrap();
        assert_eq!(x[0], y[0]);
    }

    #[test]
    fn standard_normal_rejects_zero_count() {
        assert!(standard_normal(&mut RngStream::new(1, 0), 0).is_err());
    }

    #[test]
    fn standard_normal_moments() {
        const N: usize = 1_000_000;
        let mut rng = RngStream::new(2024, 5);
        let mut buf = vec![0.0; N];
        rng.fill_standard_normal(&mut buf);
        let mut sum = CompensatedScalar::default();
        let mut sum_sq = CompensatedScalar::default();
        for &z in &buf {
            sum.add_unchecked(z);
            sum_sq.add_unchecked(z * z);
        }
        let mean = sum.value() / N as f64;
        let var = sum_sq.value() / N as f64 - mean * mean;
        // CLT bound 4/sqrt(N) on the mean, 1% chi-square band on the variance.
        assert!(mean.abs() <= 4.0 / (N as f64).sqrt(), "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "variance {var}");
    }

    #[test]
    fn next_below_is_unbiased_enough_and_in_range() {
        let mut rng = RngStream::new(3, 9);
        let mut counts = [0u32; 7];
        for _ in 0..70_000 {
            counts[rng.next_below(7) as usize] += 1;
        }
        for &c in &counts {
            assert!((9_000..11_000).contains(&c), "count {c}");
        }
    }

    proptest! {
        #[test]
        fn compensated_value_is_monotone(xs in proptest::collection::vec(0.0f64..1e9, 1..200)) {
            let mut acc = CompensatedScalar::default();
            let mut prev = 0.0;
            for x in xs {
                acc = acc.accumulate(x).unwrap();
                prop_assert!(acc.value() >= prev);
                prev = acc.value();
            }
        }

        #[test]
        fn pipelines_on_same_stream_are_bit_identical(seed in any::<u64>(), stream in any::<u64>(), n in 1usize..64) {
            let a = standard_normal(&mut RngStream::new(seed, stream), n).unwrap();
            let b = standard_normal(&mut RngStream::new(seed, stream), n).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
