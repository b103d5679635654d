//! The run manifest: a deterministic JSON record of the resolved inputs,
//! declared and fitted constants, certification flags, and per-seed summary
//! outputs. Together with the echoed config text it is sufficient to re-run
//! the experiment bit-identically. Wall-clock timing deliberately lives in a
//! separate log file so the manifest itself is byte-reproducible.

use serde::{Deserialize, Serialize};

use crate::analysis::SeedCheckpoint;
use crate::config::{OptimizerSpec, ResolvedExperiment};
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::oracles::{AffineFit, OracleKind};
use crate::telemetry::{ExcursionLog, ResidualStats, RmsPropInvariantStats};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "run.log";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    /// Original config bytes.
    pub config_text: String,
    pub profile: RunProfile,
    pub constants: ResolvedConstants,
    pub guarantees: Guarantees,
    pub stream_mapping: StreamMapping,
    pub output_dir_env_override: Option<String>,
    pub per_seed: Vec<SeedSummary>,
    pub aborted_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunProfile {
    pub objective_kind: String,
    pub oracle_kind: String,
    pub optimizer_kind: String,
    pub dim: usize,
    pub t: u64,
    pub horizons: Vec<u64>,
    pub seeds: u64,
    pub base_seed: u64,
    pub record_stride: u64,
    pub dense_prefix: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolvedConstants {
    /// Declared gradient-Lipschitz upper bound.
    pub l: f64,
    /// Declared objective infimum lower bound.
    pub gstar: f64,
    /// Declared draw-energy bound: `E|G|^2 <= sigma0 |grad|^2 + sigma1`.
    pub sigma0: f64,
    pub sigma1: f64,
    /// Present when the constants were fitted at run start (mini-batch).
    pub sigma_fit: Option<AffineFit>,
    /// `min(beta1, 1-beta1)` for RMSProp runs.
    pub r1: Option<f64>,
    /// Decrease-inequality coefficients for AdaGrad-Norm runs.
    pub c_gamma_1: Option<f64>,
    pub c_gamma_2: Option<f64>,
    /// Resolved excursion threshold.
    pub delta0: f64,
}

/// Which certified properties this run's objective/oracle pair supports.
/// Asymptotic guarantees additionally require draws to stay bounded near
/// critical points; the non-asymptotic rate does not.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Guarantees {
    pub smooth_nonnegative: bool,
    pub affine_noise: bool,
    pub coercive: bool,
    pub nonflat: bool,
    pub near_critical_bounded: bool,
    pub coordinatewise_affine: bool,
    /// Expected running supremum of the objective stays bounded.
    pub stability: bool,
    /// Single-trajectory gradient-norm convergence.
    pub almost_sure_convergence: bool,
    /// Ensemble mean-square gradient convergence.
    pub mean_square_convergence: bool,
    /// Average-squared-gradient decay rate across horizons.
    pub nonasymptotic_rate: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StreamMapping {
    pub trajectory: String,
    pub replicate: String,
    pub pilot: String,
    pub oracle_fit: String,
    pub data: String,
}

impl Default for StreamMapping {
    fn default() -> Self {
        StreamMapping {
            trajectory: "stream_id = seed_index".into(),
            replicate: "stream_id = seed_index + 2^32".into(),
            pilot: "stream_id = 2^33".into(),
            oracle_fit: "stream_id = 2^34".into(),
            data: "data_seed stream_id = 2^48".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AbortInfo {
    pub step: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VSnapshot {
    pub t: u64,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RmsPropSeedStats {
    pub invariants: RmsPropInvariantStats,
    pub v_snapshots: Vec<VSnapshot>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub stream_id: u64,
    pub csv: String,
    pub aborted: Option<AbortInfo>,
    pub checkpoints: Vec<SeedCheckpoint>,
    pub excursions: ExcursionLog,
    pub decrease_residual: Option<ResidualStats>,
    /// Max over steps of `ghat_{n+1} - ghat_n - h(ghat_n)` (AdaGrad-Norm).
    pub max_adjacency_excess: Option<f64>,
    pub rmsprop: Option<RmsPropSeedStats>,
}

pub fn csv_file_name(seed: u64) -> String {
    format!("seed_{seed:04}.csv")
}

impl RunManifest {
    pub fn guarantees_for(
        obj: &Objective,
        near_critical_bounded: bool,
        cw_affine: bool,
    ) -> Guarantees {
        let asymptotic = obj.coercive() && obj.nonflat() && near_critical_bounded;
        Guarantees {
            smooth_nonnegative: true,
            affine_noise: true,
            coercive: obj.coercive(),
            nonflat: obj.nonflat(),
            near_critical_bounded,
            coordinatewise_affine: cw_affine,
            stability: asymptotic,
            almost_sure_convergence: asymptotic,
            mean_square_convergence: asymptotic,
            nonasymptotic_rate: true,
        }
    }

    pub fn profile_for(exp: &ResolvedExperiment) -> RunProfile {
        RunProfile {
            objective_kind: objective_kind_name(&exp.objective).into(),
            oracle_kind: oracle_kind_name(&exp.oracle.kind).into(),
            optimizer_kind: exp.optimizer.kind_name().into(),
            dim: exp.objective.dim(),
            t: exp.t,
            horizons: exp.horizons.clone(),
            seeds: exp.seeds,
            base_seed: exp.base_seed,
            record_stride: exp.record_stride,
            dense_prefix: exp.dense_prefix,
        }
    }

    pub fn constants_for(
        exp: &ResolvedExperiment,
        sigma: (f64, f64),
        sigma_fit: Option<AffineFit>,
        delta0: f64,
    ) -> ResolvedConstants {
        let (sigma0, sigma1) = sigma;
        let (r1, c_gamma_1, c_gamma_2) = match exp.optimizer {
            OptimizerSpec::AdaGradNorm { alpha0, s0 } => {
                let p = crate::telemetry::LyapunovParams {
                    sigma0,
                    sigma1,
                    alpha0,
                    s0,
                    l: exp.objective.declared_l(),
                };
                (None, Some(p.c_gamma_1()), Some(p.c_gamma_2()))
            }
            OptimizerSpec::RmsProp { beta1, .. } => (Some(beta1.min(1.0 - beta1)), None, None),
            OptimizerSpec::Sgd { .. } => (None, None, None),
        };
        ResolvedConstants {
            l: exp.objective.declared_l(),
            gstar: exp.objective.declared_gstar(),
            sigma0,
            sigma1,
            sigma_fit,
            r1,
            c_gamma_1,
            c_gamma_2,
            delta0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Domain(format!("manifest serialization: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Domain(format!("manifest parse: {e}")))
    }
}

pub fn objective_kind_name(obj: &Objective) -> &'static str {
    match obj {
        Objective::Quadratic(_) => "quadratic",
        Objective::CosineWell(_) => "cosine_well",
        Objective::LogisticL2(_) => "logistic_l2",
    }
}

pub fn oracle_kind_name(kind: &OracleKind) -> &'static str {
    match kind {
        OracleKind::AdditiveGaussian { .. } => "additive_gaussian",
        OracleKind::Multiplicative { .. } => "multiplicative",
        OracleKind::MiniBatch { .. } => "mini_batch",
    }
}
