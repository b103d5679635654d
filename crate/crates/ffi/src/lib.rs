//! C ABI over the adalab core: opaque handles, integer status codes, and
//! plain-array views. Every fallible call returns [`AdalabStatus`]; the
//! message behind the most recent failure on the current thread is available
//! via [`adalab_last_error_message`].
//!
//! Pointer contract (applies to every `unsafe` function here): array
//! arguments must be valid for the stated length, output buffers must be
//! writable for the stated length, handles must come from the matching
//! constructor and be freed exactly once, and `char` pointers must be
//! NUL-terminated. Null handles and null buffers are rejected with
//! [`AdalabStatus::NullPointer`] rather than dereferenced.
#![deny(unsafe_op_in_unsafe_fn)]
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use adalab::config::load_config;
use adalab::error::Error;
use adalab::numerics::{RngStream, Vector};
use adalab::objectives::{CosineWellSpec, LogisticL2Spec, Objective, QuadraticSpec};
use adalab::optimizers::{
    adagrad_step, rmsprop_step, sgd_step, AdaGradNormState, RmsPropState, SgdState,
};
use adalab::oracles::{sample, NoiseDist, Oracle};
use adalab::runner::{run_experiment, RunOptions};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdalabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Incompatible = 5,
    TrajectoryAborted = 6,
    Io = 7,
    ConfigError = 8,
    VerdictFailure = 9,
    Internal = 10,
}

/// Scalar noise law of the multiplicative oracle.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdalabNoiseDist {
    Rademacher = 0,
    Gaussian = 1,
}

pub struct AdalabRng(RngStream);
pub struct AdalabObjective(Objective);
pub struct AdalabOracle(Oracle);
pub struct AdalabAdagrad(AdaGradNormState);
pub struct AdalabRmsprop(RmsPropState);
pub struct AdalabSgd(SgdState);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> AdalabStatus {
    match err {
        Error::DimensionMismatch { .. } => AdalabStatus::DimensionMismatch,
        Error::NonFinite { .. } => AdalabStatus::NonFinite,
        Error::Incompatible(_) => AdalabStatus::Incompatible,
        Error::TrajectoryAbort { .. } => AdalabStatus::TrajectoryAborted,
        Error::Io(_) | Error::MissingOutput(_) => AdalabStatus::Io,
        Error::Config(_) => AdalabStatus::ConfigError,
        _ => AdalabStatus::InvalidArgument,
    }
}

fn fail(err: Error) -> AdalabStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

fn guard(f: impl FnOnce() -> AdalabStatus) -> AdalabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            AdalabStatus::Internal
        }
    }
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts(ptr, len) })
    }
}

unsafe fn vector_arg(ptr: *const f64, len: usize) -> Result<Vector, AdalabStatus> {
    let Some(slice) = (unsafe { slice_arg(ptr, len) }) else {
        set_error("null vector pointer");
        return Err(AdalabStatus::NullPointer);
    };
    Vector::new(slice.to_vec()).map_err(fail)
}

unsafe fn write_out(ptr: *mut f64, values: &[f64]) -> AdalabStatus {
    if ptr.is_null() {
        set_error("null output pointer");
        return AdalabStatus::NullPointer;
    }
    unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), ptr, values.len()) };
    AdalabStatus::Ok
}

macro_rules! deref {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(h) => h,
            None => {
                set_error("null handle");
                return AdalabStatus::NullPointer;
            }
        }
    };
}

macro_rules! deref_mut {
    ($ptr:expr) => {
        match unsafe { $ptr.as_mut() } {
            Some(h) => h,
            None => {
                set_error("null handle");
                return AdalabStatus::NullPointer;
            }
        }
    };
}

/// Version string of the library; static storage, do not free.
#[no_mangle]
pub extern "C" fn adalab_version() -> *const c_char {
    concat!("adalab ", env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread. Valid until the next
/// failing call from the same thread; do not free.
#[no_mangle]
pub extern "C" fn adalab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ---- random streams ----

/// Creates a deterministic random stream for `(seed, stream_id)`.
#[no_mangle]
pub extern "C" fn adalab_rng_new(seed: u64, stream_id: u64) -> *mut AdalabRng {
    Box::into_raw(Box::new(AdalabRng(RngStream::new(seed, stream_id))))
}

#[no_mangle]
pub unsafe extern "C" fn adalab_rng_free(rng: *mut AdalabRng) {
    if !rng.is_null() {
        drop(unsafe { Box::from_raw(rng) });
    }
}

/// Fills `out[0..n]` with i.i.d. standard normal draws.
#[no_mangle]
pub unsafe extern "C" fn adalab_rng_standard_normal(
    rng: *mut AdalabRng,
    out: *mut f64,
    n: usize,
) -> AdalabStatus {
    guard(|| {
        let h = deref_mut!(rng);
        if n == 0 {
            set_error("n must be >= 1");
            return AdalabStatus::InvalidArgument;
        }
        if out.is_null() {
            set_error("null output pointer");
            return AdalabStatus::NullPointer;
        }
        let slice = unsafe { std::slice::from_raw_parts_mut(out, n) };
        h.0.fill_standard_normal(slice);
        AdalabStatus::Ok
    })
}

// ---- objectives ----

/// Quadratic objective with the given positive eigenvalues; `minimizer` may
/// be null for the origin.
#[no_mangle]
pub unsafe extern "C" fn adalab_objective_quadratic(
    eigenvalues: *const f64,
    dim: usize,
    minimizer: *const f64,
) -> *mut AdalabObjective {
    let Some(eigs) = (unsafe { slice_arg(eigenvalues, dim) }) else {
        set_error("null eigenvalue pointer");
        return std::ptr::null_mut();
    };
    let min = if minimizer.is_null() {
        Vector::zeros(dim)
    } else {
        Vector::new(unsafe { slice_arg(minimizer, dim) }.unwrap().to_vec())
    };
    let spec = min.and_then(|m| QuadraticSpec::new(eigs.to_vec(), m));
    match spec {
        Ok(s) => Box::into_raw(Box::new(AdalabObjective(Objective::Quadratic(s)))),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

/// Separable non-convex well `sum_i [x_i^2/2 + a (1 + cos(b x_i))]`
/// (requires `a b^2 > 1`).
#[no_mangle]
pub extern "C" fn adalab_objective_cosine_well(dim: usize, a: f64, b: f64) -> *mut AdalabObjective {
    match CosineWellSpec::new(dim, a, b) {
        Ok(s) => Box::into_raw(Box::new(AdalabObjective(Objective::CosineWell(s)))),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

/// Ridge-regularized logistic loss over a reproducible synthetic dataset.
#[no_mangle]
pub extern "C" fn adalab_objective_logistic_synthetic(
    n_samples: usize,
    dim: usize,
    noise_rate: f64,
    ridge: f64,
    data_seed: u64,
) -> *mut AdalabObjective {
    match LogisticL2Spec::synthetic(n_samples, dim, noise_rate, ridge, data_seed) {
        Ok(s) => Box::into_raw(Box::new(AdalabObjective(Objective::LogisticL2(s)))),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn adalab_objective_free(obj: *mut AdalabObjective) {
    if !obj.is_null() {
        drop(unsafe { Box::from_raw(obj) });
    }
}

/// Dimension of the objective (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn adalab_objective_dim(obj: *const AdalabObjective) -> usize {
    unsafe { obj.as_ref() }.map_or(0, |o| o.0.dim())
}

/// Declared upper bound on the gradient's Lipschitz constant.
#[no_mangle]
pub unsafe extern "C" fn adalab_objective_lipschitz_bound(
    obj: *const AdalabObjective,
    out: *mut f64,
) -> AdalabStatus {
    guard(|| {
        let o = deref!(obj);
        unsafe { write_out(out, &[o.0.declared_l()]) }
    })
}

/// Declared lower bound on the objective infimum.
#[no_mangle]
pub unsafe extern "C" fn adalab_objective_infimum_bound(
    obj: *const AdalabObjective,
    out: *mut f64,
) -> AdalabStatus {
    guard(|| {
        let o = deref!(obj);
        unsafe { write_out(out, &[o.0.declared_gstar()]) }
    })
}

#[no_mangle]
pub unsafe extern "C" fn adalab_objective_eval(
    obj: *const AdalabObjective,
    theta: *const f64,
    dim: usize,
    out: *mut f64,
) -> AdalabStatus {
    guard(|| {
        let o = deref!(obj);
        let theta = match unsafe { vector_arg(theta, dim) } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match o.0.eval(&theta) {
            Ok(v) => unsafe { write_out(out, &[v]) },
            Err(e) => fail(e),
        }
    })
}

/// Writes the analytic gradient into `out[0..dim]`.
#[no_mangle]
pub unsafe extern "C" fn adalab_objective_grad(
    obj: *const AdalabObjective,
    theta: *const f64,
    dim: usize,
    out: *mut f64,
) -> AdalabStatus {
    guard(|| {
        let o = deref!(obj);
        let theta = match unsafe { vector_arg(theta, dim) } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match o.0.grad(&theta) {
            Ok(g) => unsafe { write_out(out, g.as_slice()) },
            Err(e) => fail(e),
        }
    })
}

// ---- oracles ----

/// `G = grad + sigma * z` with standard normal `z`; declared energy bound
/// `(1, sigma^2 dim)`.
#[no_mangle]
pub extern "C" fn adalab_oracle_additive_gaussian(sigma: f64, dim: usize) -> *mut AdalabOracle {
    match Oracle::additive_gaussian(sigma, dim) {
        Ok(o) => Box::into_raw(Box::new(AdalabOracle(o))),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

/// `G = (1 + gamma u) grad` with scalar unit-variance `u`.
#[no_mangle]
pub extern "C" fn adalab_oracle_multiplicative(
    gamma: f64,
    dist: AdalabNoiseDist,
) -> *mut AdalabOracle {
    let dist = match dist {
        AdalabNoiseDist::Rademacher => NoiseDist::Rademacher,
        AdalabNoiseDist::Gaussian => NoiseDist::Gaussian,
    };
    match Oracle::multiplicative(gamma, dist) {
        Ok(o) => Box::into_raw(Box::new(AdalabOracle(o))),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

/// Uniform mini-batch oracle over a finite-sum objective.
#[no_mangle]
pub extern "C" fn adalab_oracle_mini_batch(
    batch_size: usize,
    replacement: bool,
) -> *mut AdalabOracle {
    match Oracle::mini_batch(batch_size, replacement) {
        Ok(o) => Box::into_raw(Box::new(AdalabOracle(o))),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn adalab_oracle_free(oracle: *mut AdalabOracle) {
    if !oracle.is_null() {
        drop(unsafe { Box::from_raw(oracle) });
    }
}

/// One stochastic gradient draw into `out[0..dim]`.
#[no_mangle]
pub unsafe extern "C" fn adalab_oracle_sample(
    oracle: *const AdalabOracle,
    obj: *const AdalabObjective,
    theta: *const f64,
    dim: usize,
    rng: *mut AdalabRng,
    out: *mut f64,
) -> AdalabStatus {
    guard(|| {
        let or = deref!(oracle);
        let ob = deref!(obj);
        let r = deref_mut!(rng);
        let theta = match unsafe { vector_arg(theta, dim) } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match sample(&or.0, &ob.0, &theta, &mut r.0) {
            Ok(g) => unsafe { write_out(out, g.as_slice()) },
            Err(e) => fail(e),
        }
    })
}

// ---- AdaGrad-Norm ----

#[no_mangle]
pub unsafe extern "C" fn adalab_adagrad_new(
    theta: *const f64,
    dim: usize,
    alpha0: f64,
    s0: f64,
) -> *mut AdalabAdagrad {
    let theta = match unsafe { vector_arg(theta, dim) } {
        Ok(v) => v,
        Err(_) => return std::ptr::null_mut(),
    };
    match AdaGradNormState::new(theta, alpha0, s0) {
        Ok(s) => Box::into_raw(Box::new(AdalabAdagrad(s))),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn adalab_adagrad_free(h: *mut AdalabAdagrad) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Applies one update with the stochastic gradient `g[0..dim]`.
#[no_mangle]
pub unsafe extern "C" fn adalab_adagrad_step(
    h: *mut AdalabAdagrad,
    g: *const f64,
    dim: usize,
) -> AdalabStatus {
    guard(|| {
        let st = deref_mut!(h);
        let g = match unsafe { vector_arg(g, dim) } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match adagrad_step(st.0.clone(), &g) {
            Ok(next) => {
                st.0 = next;
                AdalabStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Copies the current iterate into `out[0..dim]`.
#[no_mangle]
pub unsafe extern "C" fn adalab_adagrad_theta(
    h: *const AdalabAdagrad,
    out: *mut f64,
    dim: usize,
) -> AdalabStatus {
    guard(|| {
        let st = deref!(h);
        if dim != st.0.theta.dim() {
            set_error("output length does not match state dimension");
            return AdalabStatus::DimensionMismatch;
        }
        unsafe { write_out(out, st.0.theta.as_slice()) }
    })
}

/// Current squared-draw accumulator value.
#[no_mangle]
pub unsafe extern "C" fn adalab_adagrad_accumulator(
    h: *const AdalabAdagrad,
    out: *mut f64,
) -> AdalabStatus {
    guard(|| {
        let st = deref!(h);
        unsafe { write_out(out, &[st.0.s()]) }
    })
}

/// Multiplier applied to the next draw given the current accumulator.
#[no_mangle]
pub unsafe extern "C" fn adalab_adagrad_effective_stepsize(
    h: *const AdalabAdagrad,
    out: *mut f64,
) -> AdalabStatus {
    guard(|| {
        let st = deref!(h);
        unsafe { write_out(out, &[st.0.effective_stepsize()]) }
    })
}

/// Number of completed steps.
#[no_mangle]
pub unsafe extern "C" fn adalab_adagrad_step_count(
    h: *const AdalabAdagrad,
    out: *mut u64,
) -> AdalabStatus {
    guard(|| {
        let st = deref!(h);
        if out.is_null() {
            set_error("null output pointer");
            return AdalabStatus::NullPointer;
        }
        unsafe { *out = st.0.n };
        AdalabStatus::Ok
    })
}

// ---- RMSProp ----

#[no_mangle]
pub unsafe extern "C" fn adalab_rmsprop_new(
    theta: *const f64,
    dim: usize,
    beta1: f64,
    eps: f64,
    v_init: f64,
) -> *mut AdalabRmsprop {
    let theta = match unsafe { vector_arg(theta, dim) } {
        Ok(v) => v,
        Err(_) => return std::ptr::null_mut(),
    };
    match RmsPropState::new(theta, beta1, eps, v_init) {
        Ok(s) => Box::into_raw(Box::new(AdalabRmsprop(s))),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn adalab_rmsprop_free(h: *mut AdalabRmsprop) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}

#[no_mangle]
pub unsafe extern "C" fn adalab_rmsprop_step(
    h: *mut AdalabRmsprop,
    g: *const f64,
    dim: usize,
) -> AdalabStatus {
    guard(|| {
        let st = deref_mut!(h);
        let g = match unsafe { vector_arg(g, dim) } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match rmsprop_step(st.0.clone(), &g) {
            Ok(next) => {
                st.0 = next;
                AdalabStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn adalab_rmsprop_theta(
    h: *const AdalabRmsprop,
    out: *mut f64,
    dim: usize,
) -> AdalabStatus {
    guard(|| {
        let st = deref!(h);
        if dim != st.0.theta.dim() {
            set_error("output length does not match state dimension");
            return AdalabStatus::DimensionMismatch;
        }
        unsafe { write_out(out, st.0.theta.as_slice()) }
    })
}

/// Copies the per-coordinate second-moment state into `out[0..dim]`.
#[no_mangle]
pub unsafe extern "C" fn adalab_rmsprop_scaling(
    h: *const AdalabRmsprop,
    out: *mut f64,
    dim: usize,
) -> AdalabStatus {
    guard(|| {
        let st = deref!(h);
        if dim != st.0.v.dim() {
            set_error("output length does not match state dimension");
            return AdalabStatus::DimensionMismatch;
        }
        unsafe { write_out(out, st.0.v.as_slice()) }
    })
}

/// Per-coordinate multiplier for the pending step.
#[no_mangle]
pub unsafe extern "C" fn adalab_rmsprop_effective_stepsize(
    h: *const AdalabRmsprop,
    out: *mut f64,
    dim: usize,
) -> AdalabStatus {
    guard(|| {
        let st = deref!(h);
        if dim != st.0.theta.dim() {
            set_error("output length does not match state dimension");
            return AdalabStatus::DimensionMismatch;
        }
        let eta = st.0.effective_stepsize();
        unsafe { write_out(out, eta.as_slice()) }
    })
}

/// Index of the step the state is about to produce (1 before the first step).
#[no_mangle]
pub unsafe extern "C" fn adalab_rmsprop_step_index(
    h: *const AdalabRmsprop,
    out: *mut u64,
) -> AdalabStatus {
    guard(|| {
        let st = deref!(h);
        if out.is_null() {
            set_error("null output pointer");
            return AdalabStatus::NullPointer;
        }
        unsafe { *out = st.0.t };
        AdalabStatus::Ok
    })
}

// ---- SGD ----

#[no_mangle]
pub unsafe extern "C" fn adalab_sgd_new(
    theta: *const f64,
    dim: usize,
    c: f64,
    offset: f64,
) -> *mut AdalabSgd {
    let theta = match unsafe { vector_arg(theta, dim) } {
        Ok(v) => v,
        Err(_) => return std::ptr::null_mut(),
    };
    match SgdState::new(theta, c, offset) {
        Ok(s) => Box::into_raw(Box::new(AdalabSgd(s))),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn adalab_sgd_free(h: *mut AdalabSgd) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}

#[no_mangle]
pub unsafe extern "C" fn adalab_sgd_step(
    h: *mut AdalabSgd,
    g: *const f64,
    dim: usize,
) -> AdalabStatus {
    guard(|| {
        let st = deref_mut!(h);
        let g = match unsafe { vector_arg(g, dim) } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match sgd_step(st.0.clone(), &g) {
            Ok(next) => {
                st.0 = next;
                AdalabStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn adalab_sgd_theta(
    h: *const AdalabSgd,
    out: *mut f64,
    dim: usize,
) -> AdalabStatus {
    guard(|| {
        let st = deref!(h);
        if dim != st.0.theta.dim() {
            set_error("output length does not match state dimension");
            return AdalabStatus::DimensionMismatch;
        }
        unsafe { write_out(out, st.0.theta.as_slice()) }
    })
}

// ---- whole-experiment entry points ----

fn path_arg(path: *const c_char) -> Result<std::path::PathBuf, AdalabStatus> {
    if path.is_null() {
        set_error("null path");
        return Err(AdalabStatus::NullPointer);
    }
    let s = unsafe { CStr::from_ptr(path) };
    match s.to_str() {
        Ok(s) => Ok(Path::new(s).to_path_buf()),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(AdalabStatus::InvalidArgument)
        }
    }
}

/// Runs a full configured ensemble, writing CSVs and the manifest.
/// `jobs = 0` uses all logical cores.
#[no_mangle]
pub unsafe extern "C" fn adalab_run_config_file(path: *const c_char, jobs: usize) -> AdalabStatus {
    guard(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let exp = match load_config(&path) {
            Ok(e) => e,
            Err(e) => return fail(e),
        };
        let opts = RunOptions {
            jobs: if jobs == 0 { None } else { Some(jobs) },
            write_outputs: true,
            quiet: true,
        };
        match run_experiment(&exp, &opts) {
            Ok(_) => AdalabStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Certifies the configured objective/oracle pair; `VerdictFailure` when an
/// empirical check contradicts a declaration.
#[no_mangle]
pub unsafe extern "C" fn adalab_check_config_file(path: *const c_char) -> AdalabStatus {
    guard(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let exp = match load_config(&path) {
            Ok(e) => e,
            Err(e) => return fail(e),
        };
        match adalab::certify::certify(&exp) {
            Ok(r) if r.pass => AdalabStatus::Ok,
            Ok(_) => {
                set_error("certification failed");
                AdalabStatus::VerdictFailure
            }
            Err(e) => fail(e),
        }
    })
}
#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_static_null_terminated() {
        let v = unsafe { CStr::from_ptr(adalab_version()) };
        assert!(v.to_str().unwrap().starts_with("adalab "));
    }

    #[test]
    fn adagrad_roundtrip_through_c_abi() {
        unsafe {
            let theta = [2.0f64];
            let h = adalab_adagrad_new(theta.as_ptr(), 1, 1.0, 1.0);
            assert!(!h.is_null());
            let g = [2.0f64];
            assert_eq!(adalab_adagrad_step(h, g.as_ptr(), 1), AdalabStatus::Ok);
            let mut s = 0.0;
            assert_eq!(adalab_adagrad_accumulator(h, &mut s), AdalabStatus::Ok);
            assert_eq!(s, 5.0);
            let mut out = [0.0f64];
            assert_eq!(
                adalab_adagrad_theta(h, out.as_mut_ptr(), 1),
                AdalabStatus::Ok
            );
            assert!((out[0] - (2.0 - 2.0 / 5.0f64.sqrt())).abs() < 1e-15);
            adalab_adagrad_free(h);
        }
    }

    #[test]
    fn dimension_mismatch_maps_to_status() {
        unsafe {
            let theta = [1.0f64, 2.0];
            let h = adalab_adagrad_new(theta.as_ptr(), 2, 1.0, 1.0);
            let g = [1.0f64];
            let st = adalab_adagrad_step(h, g.as_ptr(), 1);
            assert_eq!(st, AdalabStatus::TrajectoryAborted);
            let msg = CStr::from_ptr(adalab_last_error_message());
            assert!(msg.to_str().unwrap().contains("aborted"));
            adalab_adagrad_free(h);
        }
    }

    #[test]
    fn oracle_and_objective_through_c_abi() {
        unsafe {
            let eigs = [1.0f64, 10.0];
            let obj = adalab_objective_quadratic(eigs.as_ptr(), 2, std::ptr::null());
            assert_eq!(adalab_objective_dim(obj), 2);
            let mut l = 0.0;
            assert_eq!(
                adalab_objective_lipschitz_bound(obj, &mut l),
                AdalabStatus::Ok
            );
            assert_eq!(l, 10.0);
            let oracle = adalab_oracle_multiplicative(0.0, AdalabNoiseDist::Rademacher);
            let rng = adalab_rng_new(1, 0);
            let theta = [3.0f64, 4.0];
            let mut out = [0.0f64; 2];
            assert_eq!(
                adalab_oracle_sample(oracle, obj, theta.as_ptr(), 2, rng, out.as_mut_ptr()),
                AdalabStatus::Ok
            );
            assert_eq!(out, [3.0, 40.0]);
            adalab_rng_free(rng);
            adalab_oracle_free(oracle);
            adalab_objective_free(obj);
        }
    }

    #[test]
    fn rmsprop_and_sgd_through_c_abi() {
        unsafe {
            let theta = [0.0f64];
            let h = adalab_rmsprop_new(theta.as_ptr(), 1, 0.5, 1e-8, 1.0);
            let g = [3.0f64];
            assert_eq!(adalab_rmsprop_step(h, g.as_ptr(), 1), AdalabStatus::Ok);
            let mut v = [0.0f64];
            assert_eq!(
                adalab_rmsprop_scaling(h, v.as_mut_ptr(), 1),
                AdalabStatus::Ok
            );
            assert_eq!(v[0], 5.0);
            let mut t = 0u64;
            assert_eq!(adalab_rmsprop_step_index(h, &mut t), AdalabStatus::Ok);
            assert_eq!(t, 2);
            adalab_rmsprop_free(h);

            let s = adalab_sgd_new(theta.as_ptr(), 1, 1.0, 0.0);
            assert_eq!(adalab_sgd_step(s, g.as_ptr(), 1), AdalabStatus::Ok);
            let mut out = [9.0f64];
            assert_eq!(adalab_sgd_theta(s, out.as_mut_ptr(), 1), AdalabStatus::Ok);
            assert_eq!(out[0], -3.0);
            adalab_sgd_free(s);
        }
    }

    #[test]
    fn rng_streams_are_deterministic_across_handles() {
        unsafe {
            let a = adalab_rng_new(7, 3);
            let b = adalab_rng_new(7, 3);
            let mut xa = [0.0f64; 8];
            let mut xb = [0.0f64; 8];
            assert_eq!(
                adalab_rng_standard_normal(a, xa.as_mut_ptr(), 8),
                AdalabStatus::Ok
            );
            assert_eq!(
                adalab_rng_standard_normal(b, xb.as_mut_ptr(), 8),
                AdalabStatus::Ok
            );
            assert_eq!(xa, xb);
            adalab_rng_free(a);
            adalab_rng_free(b);
        }
    }

    #[test]
    fn null_handles_are_rejected() {
        unsafe {
            let mut out = 0.0;
            assert_eq!(
                adalab_adagrad_accumulator(std::ptr::null(), &mut out),
                AdalabStatus::NullPointer
            );
            assert_eq!(
                adalab_objective_eval(std::ptr::null(), std::ptr::null(), 0, &mut out),
                AdalabStatus::NullPointer
            );
        }
    }
}
