//! Resolved run configurations. Every command reduces to one `RunConfig`
//! value before any work happens; the summary JSON embeds it verbatim, so a
//! saved summary (or its `config` subtree) replays the run bit-for-bit.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use storesim_core::data::LocationMode;
use storesim_core::model::{PowerCap, SystemParams};
use storesim_core::policies::PolicyKind;
use storesim_core::sim::SweepPolicy;

/// Failure class decides the exit code: configuration problems exit 1,
/// processing problems exit 2.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

pub type CliResult<T> = Result<T, Failure>;

/// Maps library errors onto the two failure classes at the call site.
pub trait OrFail<T> {
    fn or_config(self) -> CliResult<T>;
    fn or_runtime(self) -> CliResult<T>;
}

impl<T, E: Display> OrFail<T> for Result<T, E> {
    fn or_config(self) -> CliResult<T> {
        self.map_err(|e| Failure::Config(e.to_string()))
    }

    fn or_runtime(self) -> CliResult<T> {
        self.map_err(|e| Failure::Runtime(e.to_string()))
    }
}

/// Where per-slot disturbances come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceSpec {
    Laplace { mu: f64, b: f64 },
    Trace { path: PathBuf },
}

/// Policy family swept across storage capacities; thresholds are fractions of
/// each capacity so one spec covers every point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPolicySpec {
    Fixed(PolicyKind),
    Fractions { f_c: f64, f_d: f64 },
}

impl SweepPolicySpec {
    pub fn to_sweep_policy(self) -> SweepPolicy {
        match self {
            SweepPolicySpec::Fixed(kind) => SweepPolicy::Fixed(kind),
            SweepPolicySpec::Fractions { f_c, f_d } => {
                SweepPolicy::TwoThresholdFractions { f_c, f_d }
            }
        }
    }
}

/// One resolved run. Serialized with a `command` tag so the summary's
/// `config` subtree is self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Simulate {
        params: SystemParams,
        policy: PolicyKind,
        disturbance: DisturbanceSpec,
        /// Slots to sample; ignored for trace-driven runs.
        n: usize,
        seed: u64,
        /// Initial storage state (MW).
        s1: f64,
        out: PathBuf,
        slots_csv: Option<PathBuf>,
    },
    Analyze {
        params: SystemParams,
        laplace_scale: f64,
        out: PathBuf,
    },
    Fit {
        input: PathBuf,
        lags: usize,
        /// Leading fraction of the series used to fit the predictor; the
        /// remainder supplies the residuals.
        train_frac: f64,
        location: LocationMode,
        resample_minutes: Option<u32>,
        out: PathBuf,
    },
    Sweep {
        g_max: PowerCap,
        eta_c: f64,
        eta_d: f64,
        policy: SweepPolicySpec,
        values: Vec<f64>,
        laplace_mu: f64,
        laplace_scale: f64,
        n: usize,
        seed: u64,
        csv: PathBuf,
        out: PathBuf,
    },
    Pareto {
        params: SystemParams,
        fractions: Vec<f64>,
        laplace_mu: f64,
        laplace_scale: f64,
        n: usize,
        seed: u64,
        csv: PathBuf,
        out: PathBuf,
    },
    Plan {
        eta_c: f64,
        eta_d: f64,
        jg_target: f64,
        jl_target: f64,
        gmax_values: Vec<f64>,
        fractions: Vec<f64>,
        smax_hi: f64,
        smax_tol: f64,
        laplace_scale: f64,
        n: usize,
        seed: u64,
        csv: PathBuf,
        out: PathBuf,
    },
    Dp {
        params: SystemParams,
        laplace_scale: f64,
        rho1: f64,
        rho2: f64,
        n_s: usize,
        n_d: usize,
        tol: f64,
        max_iter: usize,
        value_csv: Option<PathBuf>,
        policy_csv: Option<PathBuf>,
        out: PathBuf,
    },
}

impl RunConfig {
    pub fn out_path(&self) -> &Path {
        match self {
            RunConfig::Simulate { out, .. }
            | RunConfig::Analyze { out, .. }
            | RunConfig::Fit { out, .. }
            | RunConfig::Sweep { out, .. }
            | RunConfig::Pareto { out, .. }
            | RunConfig::Plan { out, .. }
            | RunConfig::Dp { out, .. } => out,
        }
    }

    /// Seed stamped into outputs; absent for deterministic commands and
    /// trace-driven simulation.
    pub fn seed(&self) -> Option<u64> {
        match self {
            RunConfig::Simulate { disturbance: DisturbanceSpec::Trace { .. }, .. } => None,
            RunConfig::Simulate { seed, .. }
            | RunConfig::Sweep { seed, .. }
            | RunConfig::Pareto { seed, .. }
            | RunConfig::Plan { seed, .. } => Some(*seed),
            RunConfig::Analyze { .. } | RunConfig::Fit { .. } | RunConfig::Dp { .. } => None,
        }
    }

    /// Canonical form hashed into every output: the config serialized on its
    /// own. Field order is fixed by the type, so the hash is stable.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialization cannot fail")
    }
}

/// FNV-1a over the canonical config JSON; cheap, stable, and good enough to
/// tell two configs apart at a glance.
pub fn config_hash(config: &RunConfig) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for byte in config.canonical_json().bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("fnv1a64:{h:016x}")
}

/// Loads a config for replay: accepts either a bare config object or a full
/// summary JSON (its `config` subtree is taken).
pub fn load_replay(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let config_value = match value.get("config") {
        Some(sub) => sub.clone(),
        None => value,
    };
    serde_json::from_value(config_value)
        .map_err(|e| Failure::Config(format!("{}: not a valid run config: {e}", path.display())))
}
