//! Dispatch policies as pure decision rules `(params, s, delta) -> Decision`.
//!
//! Two families are implemented as literal case tables over the disturbance
//! axis: the generation-minimizing policy (drain storage before generating)
//! and the loss-minimizing policy (keep storage as full as possible, charging
//! from conventional generation when there is headroom). The two-threshold
//! family interpolates between them: below `s_c` it restores charge, between
//! the thresholds it holds the state, above `s_d` it discharges down to `s_d`.
//!
//! Rate-constrained variants are built by composing a cap onto the
//! unconstrained decision rather than by re-deriving case tables: the charge
//! and discharge are clipped to their caps and generation is recomputed as
//! the smallest value balancing the slot.
//!
//! Every case split uses half-open intervals: the lower bound is inclusive,
//! the upper exclusive, so at an exact boundary the lower row applies.

use crate::model::{Decision, NetGenSample, StorageState, SystemParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

// ── errors ──

#[derive(Debug, Error)]
pub enum PolicyError {
    /// Parameters outside the regime this policy is defined for.
    #[error("policy regime violated: {0}")]
    InvalidRegime(String),
    /// Threshold pair violating 0 <= s_c <= s_d <= s_max.
    #[error("invalid thresholds: need 0 <= s_c <= s_d <= s_max, got s_c={s_c}, s_d={s_d}, s_max={s_max}")]
    InvalidThresholds { s_c: f64, s_d: f64, s_max: f64 },
}

// ── threshold pair ──

/// Charging threshold `s_c` and discharging threshold `s_d` (MW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub s_c: f64,
    pub s_d: f64,
}

impl ThresholdPair {
    pub fn new(s_c: f64, s_d: f64, s_max: f64) -> Result<Self, PolicyError> {
        if s_c.is_nan() || s_d.is_nan() || s_c < 0.0 || s_c > s_d || s_d > s_max {
            return Err(PolicyError::InvalidThresholds { s_c, s_d, s_max });
        }
        Ok(ThresholdPair { s_c, s_d })
    }
}

/// Which decision rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Minimize average conventional generation (unconstrained rates).
    MinGeneration,
    /// Minimize loss-of-load probability (unconstrained rates).
    MinLolp,
    /// Two-threshold policy with the given pair (unconstrained rates).
    TwoThreshold(ThresholdPair),
    /// Generation-minimizing policy under binding rate caps.
    MinGenerationConstrained,
    /// Loss-minimizing policy under binding rate caps.
    MinLolpConstrained,
    /// Loss-suppressing policy that never charges from generation.
    SuboptimalLolp,
}

// ── regime checks ──

fn ensure_unconstrained(params: &SystemParams) -> Result<(), PolicyError> {
    if params.is_unconstrained_rates() {
        Ok(())
    } else {
        Err(PolicyError::InvalidRegime(format!(
            "rate caps must never bind (eta_c*c_max = s_max = d_max/eta_d); got c_max={}, d_max={}, s_max={}",
            params.c_max, params.d_max, params.s_max
        )))
    }
}

fn ensure_rates_within_capacity(params: &SystemParams) -> Result<(), PolicyError> {
    if params.rates_within_capacity() {
        Ok(())
    } else {
        Err(PolicyError::InvalidRegime(format!(
            "rate caps exceed what storage capacity admits (need c_max <= s_max/eta_c, d_max <= eta_d*s_max); got c_max={}, d_max={}, s_max={}",
            params.c_max, params.d_max, params.s_max
        )))
    }
}

fn ensure_finite_smax(params: &SystemParams) -> Result<(), PolicyError> {
    if params.s_max.is_finite() {
        Ok(())
    } else {
        Err(PolicyError::InvalidRegime(
            "this policy charges toward s_max and requires it finite".to_string(),
        ))
    }
}

/// Rate caps loosened so they never bind; basis for the constrained variants.
fn lifted(params: &SystemParams) -> SystemParams {
    SystemParams {
        c_max: params.s_max / params.eta_c,
        d_max: params.eta_d * params.s_max,
        ..*params
    }
}

// ── case tables (internal, no regime checks) ──

fn min_generation_rows(p: &SystemParams, s: f64, delta: f64) -> Decision {
    let (ec, ed) = (p.eta_c, p.eta_d);
    let (smax, gmax) = (p.s_max, p.g_max.mw());
    if delta >= (smax - s) / ec {
        // surplus beyond what fills storage: charge full, spill the rest
        Decision { g: 0.0, c: (smax - s) / ec, d: 0.0 }
    } else if delta >= 0.0 {
        // absorb the whole surplus
        Decision { g: 0.0, c: delta, d: 0.0 }
    } else if delta >= -(ed * s) {
        // deficit met from storage alone
        Decision { g: 0.0, c: 0.0, d: -delta }
    } else if delta >= -gmax - ed * s {
        // storage drained; generation covers the remainder
        Decision { g: -delta - ed * s, c: 0.0, d: ed * s }
    } else {
        // loss of load: everything at its limit
        Decision { g: gmax, c: 0.0, d: ed * s }
    }
}

fn min_lolp_rows(p: &SystemParams, s: f64, delta: f64) -> Decision {
    let (ec, ed) = (p.eta_c, p.eta_d);
    let (smax, gmax) = (p.s_max, p.g_max.mw());
    if delta >= (smax - s) / ec {
        Decision { g: 0.0, c: (smax - s) / ec, d: 0.0 }
    } else if delta >= -gmax + (smax - s) / ec {
        // generation tops the surplus up to a full recharge
        Decision { g: (smax - s) / ec - delta, c: (smax - s) / ec, d: 0.0 }
    } else if delta >= -gmax {
        // generation at capacity; whatever is left of it after the deficit
        // still goes into storage
        Decision { g: gmax, c: gmax + delta, d: 0.0 }
    } else if delta >= -gmax - ed * s {
        Decision { g: gmax, c: 0.0, d: -delta - gmax }
    } else {
        Decision { g: gmax, c: 0.0, d: ed * s }
    }
}

fn two_threshold_rows(p: &SystemParams, s_c: f64, s_d: f64, s: f64, delta: f64) -> Decision {
    let (ec, ed) = (p.eta_c, p.eta_d);
    let (smax, gmax) = (p.s_max, p.g_max.mw());
    if s < s_c {
        // below the charging threshold: restore to s_c, from generation if needed
        if delta >= (smax - s) / ec {
            Decision { g: 0.0, c: (smax - s) / ec, d: 0.0 }
        } else if delta >= (s_c - s) / ec {
            Decision { g: 0.0, c: delta, d: 0.0 }
        } else if delta >= (s_c - s) / ec - gmax {
            Decision { g: (s_c - s) / ec - delta, c: (s_c - s) / ec, d: 0.0 }
        } else if delta >= -gmax {
            Decision { g: gmax, c: gmax + delta, d: 0.0 }
        } else if delta >= -gmax - ed * s {
            Decision { g: gmax, c: 0.0, d: -gmax - delta }
        } else {
            Decision { g: gmax, c: 0.0, d: ed * s }
        }
    } else if s <= s_d {
        // between the thresholds: hold the state, generation covers deficits
        if delta >= (smax - s) / ec {
            Decision { g: 0.0, c: (smax - s) / ec, d: 0.0 }
        } else if delta >= 0.0 {
            Decision { g: 0.0, c: delta, d: 0.0 }
        } else if delta >= -gmax {
            Decision { g: -delta, c: 0.0, d: 0.0 }
        } else if delta >= -gmax - ed * s {
            Decision { g: gmax, c: 0.0, d: -gmax - delta }
        } else {
            Decision { g: gmax, c: 0.0, d: ed * s }
        }
    } else {
        // above the discharging threshold: drain back toward s_d first
        if delta >= (smax - s) / ec {
            Decision { g: 0.0, c: (smax - s) / ec, d: 0.0 }
        } else if delta >= 0.0 {
            Decision { g: 0.0, c: delta, d: 0.0 }
        } else if delta >= -(ed * (s - s_d)) {
            Decision { g: 0.0, c: 0.0, d: -delta }
        } else if delta >= -(ed * (s - s_d)) - gmax {
            Decision { g: -delta - ed * (s - s_d), c: 0.0, d: ed * (s - s_d) }
        } else if delta >= -gmax - ed * s {
            Decision { g: gmax, c: 0.0, d: -gmax - delta }
        } else {
            Decision { g: gmax, c: 0.0, d: ed * s }
        }
    }
}

fn suboptimal_lolp_rows(p: &SystemParams, s: f64, delta: f64) -> Decision {
    let (ec, ed) = (p.eta_c, p.eta_d);
    let (smax, gmax) = (p.s_max, p.g_max.mw());
    if delta >= (smax - s) / ec {
        Decision { g: 0.0, c: (smax - s) / ec, d: 0.0 }
    } else if delta >= 0.0 {
        Decision { g: 0.0, c: delta, d: 0.0 }
    } else if delta >= -gmax {
        // deficits are met by generation only; storage is never tapped early
        Decision { g: -delta, c: 0.0, d: 0.0 }
    } else if delta >= -gmax - ed * s {
        Decision { g: gmax, c: 0.0, d: -delta - gmax }
    } else {
        Decision { g: gmax, c: 0.0, d: ed * s }
    }
}

/// Clip the storage decision to the rate caps and rebalance generation as the
/// smallest feasible value. When neither cap binds, the base decision's `g`
/// is already that balance completion, so it is reused verbatim (this keeps
/// the constrained policies bit-identical to the unconstrained ones whenever
/// the caps never bind).
fn compose_rate_caps(p: &SystemParams, delta: f64, base: Decision) -> Decision {
    let c = base.c.min(p.c_max);
    let d = base.d.min(p.d_max);
    if c == base.c && d == base.d {
        return Decision { g: base.g.min(p.g_max.mw()), c, d };
    }
    let g = (c - d - delta).max(0.0).min(p.g_max.mw());
    Decision { g, c, d }
}

// ── public decision rules ──

/// Generation-minimizing policy: drain storage before dispatching generation.
pub fn decide_min_generation(
    params: &SystemParams,
    s: StorageState,
    delta: NetGenSample,
) -> Result<Decision, PolicyError> {
    ensure_unconstrained(params)?;
    Ok(min_generation_rows(params, s.s, delta.delta))
}

/// Loss-minimizing policy: keep storage as full as generation headroom allows.
pub fn decide_min_lolp(
    params: &SystemParams,
    s: StorageState,
    delta: NetGenSample,
) -> Result<Decision, PolicyError> {
    ensure_unconstrained(params)?;
    ensure_finite_smax(params)?;
    Ok(min_lolp_rows(params, s.s, delta.delta))
}

/// Two-threshold policy. `(0, 0)` reproduces the generation-minimizing rule
/// and `(s_max, s_max)` the loss-minimizing rule, decision for decision.
pub fn decide_two_threshold(
    params: &SystemParams,
    thresholds: ThresholdPair,
    s: StorageState,
    delta: NetGenSample,
) -> Result<Decision, PolicyError> {
    ensure_unconstrained(params)?;
    ensure_finite_smax(params)?;
    if !(thresholds.s_c >= 0.0 && thresholds.s_c <= thresholds.s_d && thresholds.s_d <= params.s_max)
    {
        return Err(PolicyError::InvalidThresholds {
            s_c: thresholds.s_c,
            s_d: thresholds.s_d,
            s_max: params.s_max,
        });
    }
    Ok(two_threshold_rows(params, thresholds.s_c, thresholds.s_d, s.s, delta.delta))
}

/// Generation-minimizing policy under binding charge/discharge caps.
pub fn decide_min_generation_constrained(
    params: &SystemParams,
    s: StorageState,
    delta: NetGenSample,
) -> Result<Decision, PolicyError> {
    ensure_rates_within_capacity(params)?;
    let base = min_generation_rows(&lifted(params), s.s, delta.delta);
    Ok(compose_rate_caps(params, delta.delta, base))
}

/// Loss-minimizing policy under binding charge/discharge caps.
pub fn decide_min_lolp_constrained(
    params: &SystemParams,
    s: StorageState,
    delta: NetGenSample,
) -> Result<Decision, PolicyError> {
    ensure_rates_within_capacity(params)?;
    ensure_finite_smax(params)?;
    let base = min_lolp_rows(&lifted(params), s.s, delta.delta);
    Ok(compose_rate_caps(params, delta.delta, base))
}

/// Loss-suppressing policy that never charges from generation: deficits up to
/// `g_max` are covered by generation alone, leaving storage untouched.
pub fn decide_suboptimal_lolp(
    params: &SystemParams,
    s: StorageState,
    delta: NetGenSample,
) -> Result<Decision, PolicyError> {
    ensure_unconstrained(params)?;
    ensure_finite_smax(params)?;
    Ok(suboptimal_lolp_rows(params, s.s, delta.delta))
}

/// Dispatch on a `PolicyKind`.
pub fn decide(
    params: &SystemParams,
    kind: PolicyKind,
    s: StorageState,
    delta: NetGenSample,
) -> Result<Decision, PolicyError> {
    match kind {
        PolicyKind::MinGeneration => decide_min_generation(params, s, delta),
        PolicyKind::MinLolp => decide_min_lolp(params, s, delta),
        PolicyKind::TwoThreshold(t) => decide_two_threshold(params, t, s, delta),
        PolicyKind::MinGenerationConstrained => decide_min_generation_constrained(params, s, delta),
        PolicyKind::MinLolpConstrained => decide_min_lolp_constrained(params, s, delta),
        PolicyKind::SuboptimalLolp => decide_suboptimal_lolp(params, s, delta),
    }
}
