//! Experiment configuration: a versioned TOML schema parsed into fully
//! resolved run inputs. Outputs are a pure function of (config bytes,
//! base_seed), so everything that affects numbers lives here.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::objectives::{log_spaced, CosineWellSpec, LogisticL2Spec, Objective, QuadraticSpec};
use crate::optimizers::{AdaGradNormState, RmsPropState, SgdState};
use crate::oracles::{NoiseDist, Oracle};

pub const SCHEMA_VERSION: u32 = 1;

/// Stream id layout under the run's base seed. Trajectories use their seed
/// index; everything else lives in disjoint high ranges.
pub mod streams {
    /// Replicate (conditional-estimate) stream for seed `i`: `i + 2^32`.
    pub const REPLICATE_OFFSET: u64 = 1 << 32;

    /// Stream id for a trajectory's replicate estimator.
    pub const fn replicate_stream_id(seed_index: u64) -> u64 {
        seed_index + REPLICATE_OFFSET
    }
    /// Pilot trajectory used to resolve an auto threshold.
    pub const PILOT: u64 = 1 << 33;
    /// Start-of-run oracle constant fitting.
    pub const ORACLE_FIT: u64 = 1 << 34;
    /// Certification commands; one stream per sub-check, offset by index.
    pub const CHECK_BASE: u64 = 1 << 35;
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub objective: ObjectiveConfig,
    pub oracle: OracleConfig,
    pub optimizer: OptimizerConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Quadratic {
        dim: usize,
        #[serde(default)]
        eigenvalues: Option<Vec<f64>>,
        /// Log-spaced ladder `[lo, hi]`; exclusive with `eigenvalues`.
        #[serde(default)]
        eig_range: Option<[f64; 2]>,
        /// Fill value for the minimizer (explicit array not needed at desk scale).
        #[serde(default)]
        minimizer: f64,
    },
    CosineWell {
        dim: usize,
        a: f64,
        b: f64,
    },
    LogisticL2 {
        dim: usize,
        n_samples: usize,
        noise_rate: f64,
        ridge: f64,
        data_seed: u64,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    AdditiveGaussian {
        sigma: f64,
    },
    Multiplicative {
        gamma: f64,
        dist: NoiseDist,
    },
    MiniBatch {
        batch_size: usize,
        replacement: bool,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    AdagradNorm {
        #[serde(default = "default_alpha0")]
        alpha0: f64,
        #[serde(default = "default_s0")]
        s0: f64,
    },
    Rmsprop {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_v_init")]
        v_init: f64,
    },
    Sgd {
        c: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn default_alpha0() -> f64 {
    1.0
}
fn default_s0() -> f64 {
    1.0
}
fn default_beta1() -> f64 {
    0.9
}
fn default_eps() -> f64 {
    1e-8
}
fn default_v_init() -> f64 {
    1e-6
}

/// Excursion threshold: an explicit number or `"auto-percentile:p"` resolved
/// from a pilot trajectory's `ghat` series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Delta0Spec {
    Value(f64),
    AutoPercentile(f64),
}

impl Default for Delta0Spec {
    fn default() -> Self {
        Delta0Spec::AutoPercentile(90.0)
    }
}

impl<'de> Deserialize<'de> for Delta0Spec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(Delta0Spec::Value(v)),
            Raw::Str(s) => {
                let rest = s.strip_prefix("auto-percentile:").ok_or_else(|| {
                    serde::de::Error::custom(format!(
                        "delta0 must be a number or \"auto-percentile:<p>\", got {s:?}"
                    ))
                })?;
                let p: f64 = rest
                    .parse()
                    .map_err(|e| serde::de::Error::custom(format!("bad percentile: {e}")))?;
                Ok(Delta0Spec::AutoPercentile(p))
            }
        }
    }
}

/// Scalar fill or explicit array.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum FillOrVec {
    Fill(f64),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t: u64,
    pub horizons: Vec<u64>,
    pub seeds: u64,
    pub base_seed: u64,
    pub theta_init: FillOrVec,
    #[serde(default = "default_stride")]
    pub record_stride: u64,
    #[serde(default = "default_dense_prefix")]
    pub dense_prefix: u64,
    #[serde(default)]
    pub delta0: Delta0Spec,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_stride() -> u64 {
    1000
}
fn default_dense_prefix() -> u64 {
    100
}

/// Monte Carlo budgets for the certification command.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub fd_points: usize,
    pub fd_h: f64,
    pub fd_rel_tol: f64,
    pub smoothness_pairs: usize,
    pub smoothness_radius: f64,
    pub affine_probes: usize,
    pub affine_draws: usize,
    pub affine_rel_tol: f64,
    pub near_critical_d0: f64,
    pub near_critical_draws: usize,
    pub bound_samples: usize,
    pub unbiased_points: usize,
    pub unbiased_draws: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            fd_points: 100,
            fd_h: 1e-5,
            fd_rel_tol: 1e-6,
            smoothness_pairs: 10_000,
            smoothness_radius: 10.0,
            affine_probes: 8,
            affine_draws: 10_000,
            affine_rel_tol: 0.10,
            near_critical_d0: 0.01,
            near_critical_draws: 10_000,
            bound_samples: 1_000,
            unbiased_points: 5,
            unbiased_draws: 20_000,
        }
    }
}

/// Fully validated run inputs.
#[derive(Clone, Debug)]
pub struct ResolvedExperiment {
    pub config_text: String,
    pub objective: Objective,
    pub oracle: Oracle,
    pub optimizer: OptimizerSpec,
    pub theta_init: Vector,
    pub t: u64,
    pub horizons: Vec<u64>,
    pub seeds: u64,
    pub base_seed: u64,
    pub record_stride: u64,
    pub dense_prefix: u64,
    pub delta0: Delta0Spec,
    pub output_dir: PathBuf,
    pub output_dir_env_override: Option<String>,
    pub jobs: Option<usize>,
    pub check: CheckConfig,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum OptimizerSpec {
    AdaGradNorm { alpha0: f64, s0: f64 },
    RmsProp { beta1: f64, eps: f64, v_init: f64 },
    Sgd { c: f64, offset: f64 },
}

impl OptimizerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            OptimizerSpec::AdaGradNorm { .. } => "adagrad_norm",
            OptimizerSpec::RmsProp { .. } => "rmsprop",
            OptimizerSpec::Sgd { .. } => "sgd",
        }
    }

    pub fn make_adagrad(&self, theta: Vector) -> Result<AdaGradNormState> {
        match *self {
            OptimizerSpec::AdaGradNorm { alpha0, s0 } => AdaGradNormState::new(theta, alpha0, s0),
            _ => Err(Error::Config("not an adagrad_norm optimizer".into())),
        }
    }

    pub fn make_rmsprop(&self, theta: Vector) -> Result<RmsPropState> {
        match *self {
            OptimizerSpec::RmsProp { beta1, eps, v_init } => {
                RmsPropState::new(theta, beta1, eps, v_init)
            }
            _ => Err(Error::Config("not an rmsprop optimizer".into())),
        }
    }

    pub fn make_sgd(&self, theta: Vector) -> Result<SgdState> {
        match *self {
            OptimizerSpec::Sgd { c, offset } => SgdState::new(theta, c, offset),
            _ => Err(Error::Config("not an sgd optimizer".into())),
        }
    }
}

/// Environment variable that overrides `run.output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "ADALAB_OUTPUT_DIR";

pub fn parse_config(text: &str) -> Result<ResolvedExperiment> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
    resolve(file, text.to_string(), std::env::var(OUTPUT_DIR_ENV).ok())
}

pub fn load_config(path: &std::path::Path) -> Result<ResolvedExperiment> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn resolve(
    file: ConfigFile,
    config_text: String,
    env_output_dir: Option<String>,
) -> Result<ResolvedExperiment> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported schema_version {}; this build reads {SCHEMA_VERSION}",
            file.schema_version
        )));
    }
    let objective = build_objective(&file.objective)?;
    let dim = objective.dim();
    let oracle = build_oracle(&file.oracle, &objective)?;
    let optimizer = build_optimizer(&file.optimizer)?;

    let run = &file.run;
    if run.t == 0 {
        return Err(Error::Config("run.t must be >= 1".into()));
    }
    if run.seeds == 0 {
        return Err(Error::Config("run.seeds must be >= 1".into()));
    }
    if run.record_stride == 0 {
        return Err(Error::Config("run.record_stride must be >= 1".into()));
    }
    let mut horizons = run.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons.is_empty() {
        return Err(Error::Config("run.horizons must be non-empty".into()));
    }
    if horizons[0] < 1 || *horizons.last().unwrap() > run.t {
        return Err(Error::Config(format!(
            "run.horizons must lie in [1, {}], got {:?}",
            run.t, run.horizons
        )));
    }
    let theta_init = match &run.theta_init {
        FillOrVec::Fill(v) => {
            Vector::filled(dim, *v).map_err(|e| Error::Config(format!("run.theta_init: {e}")))?
        }
        FillOrVec::Explicit(v) => {
            let vec = Vector::new(v.clone())
                .map_err(|e| Error::Config(format!("run.theta_init: {e}")))?;
            vec.check_dim(dim).map_err(|_| {
                Error::Config(format!(
                    "run.theta_init has length {}, objective dimension is {dim}",
                    v.len()
                ))
            })?;
            vec
        }
    };
    if let Delta0Spec::AutoPercentile(p) = run.delta0 {
        if !(0.0 < p && p < 100.0) {
            return Err(Error::Config(format!(
                "delta0 percentile must be in (0, 100), got {p}"
            )));
        }
    }
    if let Delta0Spec::Value(v) = run.delta0 {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("delta0 must be positive, got {v}")));
        }
    }
    let output_dir = match &env_output_dir {
        Some(dir) => PathBuf::from(dir),
        None => run.output_dir.clone(),
    };
    Ok(ResolvedExperiment {
        config_text,
        objective,
        oracle,
        optimizer,
        theta_init,
        t: run.t,
        horizons,
        seeds: run.seeds,
        base_seed: run.base_seed,
        record_stride: run.record_stride,
        dense_prefix: run.dense_prefix,
        delta0: run.delta0,
        output_dir,
        output_dir_env_override: env_output_dir,
        jobs: run.jobs,
        check: file.check,
    })
}

fn build_objective(cfg: &ObjectiveConfig) -> Result<Objective> {
    match cfg {
        ObjectiveConfig::Quadratic {
            dim,
            eigenvalues,
            eig_range,
            minimizer,
        } => {
            let eigs = match (eigenvalues, eig_range) {
                (Some(e), None) => {
                    if e.len() != *dim {
                        return Err(Error::Config(format!(
                            "objective.eigenvalues has length {}, dim is {dim}",
                            e.len()
                        )));
                    }
                    e.clone()
                }
                (None, Some([lo, hi])) => log_spaced(*dim, *lo, *hi)
                    .map_err(|e| Error::Config(format!("objective.eig_range: {e}")))?,
                _ => {
                    return Err(Error::Config(
                        "quadratic objective needs exactly one of eigenvalues / eig_range".into(),
                    ))
                }
            };
            let minimizer = Vector::filled(*dim, *minimizer)
                .map_err(|e| Error::Config(format!("objective.minimizer: {e}")))?;
            Ok(Objective::Quadratic(
                QuadraticSpec::new(eigs, minimizer)
                    .map_err(|e| Error::Config(format!("objective: {e}")))?,
            ))
        }
        ObjectiveConfig::CosineWell { dim, a, b } => Ok(Objective::CosineWell(
            CosineWellSpec::new(*dim, *a, *b)
                .map_err(|e| Error::Config(format!("objective: {e}")))?,
        )),
        ObjectiveConfig::LogisticL2 {
            dim,
            n_samples,
            noise_rate,
            ridge,
            data_seed,
        } => Ok(Objective::LogisticL2(
            LogisticL2Spec::synthetic(*n_samples, *dim, *noise_rate, *ridge, *data_seed)
                .map_err(|e| Error::Config(format!("objective: {e}")))?,
        )),
    }
}

fn build_oracle(cfg: &OracleConfig, obj: &Objective) -> Result<Oracle> {
    let oracle = match cfg {
        OracleConfig::AdditiveGaussian { sigma } => Oracle::additive_gaussian(*sigma, obj.dim()),
        OracleConfig::Multiplicative { gamma, dist } => Oracle::multiplicative(*gamma, *dist),
        OracleConfig::MiniBatch {
            batch_size,
            replacement,
        } => {
            if obj.finite_sum_len().is_none() {
                return Err(Error::Config(
                    "mini_batch oracle requires the logistic_l2 objective".into(),
                ));
            }
            Oracle::mini_batch(*batch_size, *replacement)
        }
    };
    oracle.map_err(|e| Error::Config(format!("oracle: {e}")))
}

fn build_optimizer(cfg: &OptimizerConfig) -> Result<OptimizerSpec> {
    let spec = match cfg {
        OptimizerConfig::AdagradNorm { alpha0, s0 } => OptimizerSpec::AdaGradNorm {
            alpha0: *alpha0,
            s0: *s0,
        },
        OptimizerConfig::Rmsprop { beta1, eps, v_init } => OptimizerSpec::RmsProp {
            beta1: *beta1,
            eps: *eps,
            v_init: *v_init,
        },
        OptimizerConfig::Sgd { c, offset } => OptimizerSpec::Sgd {
            c: *c,
            offset: *offset,
        },
    };
    // construct a throwaway state so parameter validation happens at load time
    let probe = Vector::zeros(1)?;
    match spec {
        OptimizerSpec::AdaGradNorm { .. } => {
            spec.make_adagrad(probe)
                .map_err(|e| Error::Config(format!("optimizer: {e}")))?;
        }
        OptimizerSpec::RmsProp { .. } => {
            spec.make_rmsprop(probe)
                .map_err(|e| Error::Config(format!("optimizer: {e}")))?;
        }
        OptimizerSpec::Sgd { .. } => {
            spec.make_sgd(probe)
                .map_err(|e| Error::Config(format!("optimizer: {e}")))?;
        }
    }
    Ok(spec)
}
