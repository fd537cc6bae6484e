//! Single-bus power system with lossy energy storage.
//!
//! Each dispatch slot the operator observes the net renewable surplus `delta`
//! (renewable generation minus demand, MW, negative = deficit) and picks a
//! decision `(g, c, d)`: conventional generation, storage charge rate, and
//! storage discharge rate. Stored power then evolves as
//! `next_s = s + eta_c * c - d / eta_d`, bounded to `[0, s_max]`.
//!
//! When the deficit exceeds what generation plus the fastest possible
//! discharge can cover, the slot is a loss-of-load event and the decision is
//! forced: generation at capacity, no charging, discharge at the maximum
//! feasible rate.

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use thiserror::Error;

/// Absolute tolerance (MW) for every feasibility inequality in this crate.
/// Covers float error accumulated over long traces.
pub const FEAS_TOL: f64 = 1e-9;

// ── errors ──

#[derive(Debug, Error)]
pub enum ModelError {
    /// The decision violates a box constraint, the power balance, or the
    /// storage bounds for the given state and disturbance.
    #[error("infeasible decision ({reason}): g={g}, c={c}, d={d} at s={s}, delta={delta}")]
    InfeasibleDecision {
        reason: &'static str,
        g: f64,
        c: f64,
        d: f64,
        s: f64,
        delta: f64,
    },
    /// System parameters outside their admissible ranges.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

// ── capacities ──

/// Conventional generation capacity. An explicit unbounded marker avoids
/// sentinel floats in configuration while `mw()` still yields the value used
/// in arithmetic (`f64::INFINITY` when unbounded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerCap {
    Bounded(f64),
    Unbounded,
}

impl PowerCap {
    /// Capacity in MW; `f64::INFINITY` when unbounded.
    #[inline]
    pub fn mw(self) -> f64 {
        match self {
            PowerCap::Bounded(v) => v,
            PowerCap::Unbounded => f64::INFINITY,
        }
    }

    #[inline]
    pub fn is_unbounded(self) -> bool {
        matches!(self, PowerCap::Unbounded)
    }
}

impl Serialize for PowerCap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PowerCap::Bounded(v) => serializer.serialize_f64(*v),
            PowerCap::Unbounded => serializer.serialize_str("unbounded"),
        }
    }
}

struct PowerCapVisitor;

impl<'de> Visitor<'de> for PowerCapVisitor {
    type Value = PowerCap;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number of MW or the string \"unbounded\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<PowerCap, E> {
        Ok(PowerCap::Bounded(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<PowerCap, E> {
        Ok(PowerCap::Bounded(v as f64))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<PowerCap, E> {
        Ok(PowerCap::Bounded(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<PowerCap, E> {
        match v {
            "unbounded" | "inf" => Ok(PowerCap::Unbounded),
            _ => Err(E::custom(format!("unrecognized capacity: {v}"))),
        }
    }
}

impl<'de> Deserialize<'de> for PowerCap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(PowerCapVisitor)
    }
}

/// Serde adaptors for f64 fields that may legitimately be infinite
/// (JSON has no inf literal; we use the string "inf").
pub mod serde_inf {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            serializer.serialize_f64(*v)
        } else {
            serializer.serialize_str("inf")
        }
    }

    struct MaybeInf;

    impl<'de> Visitor<'de> for MaybeInf {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or the string \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" | "unbounded" => Ok(f64::INFINITY),
                _ => Err(E::custom(format!("unrecognized value: {v}"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        deserializer.deserialize_any(MaybeInf)
    }
}

// ── parameters ──

/// Static system configuration. All powers are in MW (slot-average), state
/// of charge is the dischargeable-equivalent stored power `s` in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Conventional generation capacity.
    pub g_max: PowerCap,
    /// Storage capacity; may be `f64::INFINITY`.
    #[serde(with = "serde_inf")]
    pub s_max: f64,
    /// Charge rate cap; may be `f64::INFINITY`.
    #[serde(with = "serde_inf")]
    pub c_max: f64,
    /// Discharge rate cap; may be `f64::INFINITY`.
    #[serde(with = "serde_inf")]
    pub d_max: f64,
    /// Charging efficiency in (0, 1].
    pub eta_c: f64,
    /// Discharging efficiency in (0, 1].
    pub eta_d: f64,
    /// Slot length in hours (energy = power x slot_hours in reports).
    pub slot_hours: f64,
}

/// Tolerant equality for capacity comparisons; exact for equal infinities.
#[inline]
fn cap_eq(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= FEAS_TOL * (1.0 + a.abs().max(b.abs()))
}

impl SystemParams {
    /// Full constructor with validation.
    pub fn new(
        g_max: PowerCap,
        s_max: f64,
        c_max: f64,
        d_max: f64,
        eta_c: f64,
        eta_d: f64,
        slot_hours: f64,
    ) -> Result<Self, ModelError> {
        let p = SystemParams { g_max, s_max, c_max, d_max, eta_c, eta_d, slot_hours };
        p.validate()?;
        Ok(p)
    }

    /// Rates set so that neither cap ever binds: a full charge or a full
    /// discharge fits in one slot (`eta_c * c_max = s_max = d_max / eta_d`).
    pub fn unconstrained(
        g_max: PowerCap,
        s_max: f64,
        eta_c: f64,
        eta_d: f64,
    ) -> Result<Self, ModelError> {
        Self::new(g_max, s_max, s_max / eta_c, eta_d * s_max, eta_c, eta_d, 1.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidParams(msg));
        if let PowerCap::Bounded(g) = self.g_max {
            if !(g.is_finite() && g >= 0.0) {
                return bad(format!("g_max must be finite and >= 0, got {g}"));
            }
        }
        if !(self.s_max >= 0.0) {
            return bad(format!("s_max must be >= 0, got {}", self.s_max));
        }
        if !(self.c_max >= 0.0) || !(self.d_max >= 0.0) {
            return bad(format!("rate caps must be >= 0, got c_max={}, d_max={}", self.c_max, self.d_max));
        }
        for (name, eta) in [("eta_c", self.eta_c), ("eta_d", self.eta_d)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {eta}"));
            }
        }
        if !(self.slot_hours > 0.0 && self.slot_hours.is_finite()) {
            return bad(format!("slot_hours must be finite and > 0, got {}", self.slot_hours));
        }
        Ok(())
    }

    /// Round-trip storage efficiency.
    #[inline]
    pub fn alpha(&self) -> f64 {
        self.eta_c * self.eta_d
    }

    /// Fastest discharge available from state `s`.
    #[inline]
    pub fn discharge_cap(&self, s: f64) -> f64 {
        (self.eta_d * s).min(self.d_max)
    }

    /// True when the rate caps never bind: `eta_c * c_max = s_max` and
    /// `d_max = eta_d * s_max` (tolerant comparison; infinities match).
    pub fn is_unconstrained_rates(&self) -> bool {
        cap_eq(self.eta_c * self.c_max, self.s_max) && cap_eq(self.d_max, self.eta_d * self.s_max)
    }

    /// True when the rate caps are no looser than the storage capacity allows,
    /// i.e. `c_max <= s_max / eta_c` and `d_max <= eta_d * s_max`.
    pub fn rates_within_capacity(&self) -> bool {
        self.c_max <= self.s_max / self.eta_c + FEAS_TOL * (1.0 + self.s_max)
            && self.d_max <= self.eta_d * self.s_max + FEAS_TOL * (1.0 + self.s_max)
    }
}

// ── state, disturbance, decision ──

/// Stored power at the start of a slot, in dischargeable-equivalent MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageState {
    pub s: f64,
}

impl StorageState {
    #[inline]
    pub fn new(s: f64) -> Self {
        StorageState { s }
    }

    /// State within bounds for the given parameters (tolerant).
    pub fn is_valid(&self, params: &SystemParams) -> bool {
        self.s >= -FEAS_TOL && self.s <= params.s_max + FEAS_TOL
    }
}

/// Net renewable surplus for one slot (negative = deficit), MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetGenSample {
    pub delta: f64,
}

impl From<f64> for NetGenSample {
    #[inline]
    fn from(delta: f64) -> Self {
        NetGenSample { delta }
    }
}

/// One slot's dispatch: conventional generation `g`, charge `c`, discharge
/// `d`, all in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub g: f64,
    pub c: f64,
    pub d: f64,
}

/// Result of advancing one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotOutcome {
    /// Stored power at the start of the next slot.
    pub next_s: f64,
    /// True when the deficit exceeded generation capacity plus the fastest
    /// feasible discharge; the decision was forced for this slot.
    pub lost_load: bool,
    /// Surplus power spilled this slot (0 on loss slots).
    pub curtailed: f64,
    /// Conventional generation actually dispatched.
    pub g_used: f64,
}

// ── disturbance distribution ──

/// Distribution of the per-slot net surplus `delta`.
///
/// `partial_mean` is the workhorse for closed-form cost expressions: it must
/// be exact (not quadrature-based) where a closed form exists.
pub trait Disturbance: Send + Sync {
    /// P(X <= x). Must accept infinite arguments.
    fn cdf(&self, x: f64) -> f64;

    /// P(X < x); differs from `cdf` only at atoms.
    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    /// Smallest x with P(X <= x) >= u, for u in (0, 1).
    fn quantile(&self, u: f64) -> f64;

    /// Density at x when the distribution has one.
    fn pdf(&self, x: f64) -> Option<f64>;

    /// E[X * 1{a < X <= b}]; bounds may be infinite.
    fn partial_mean(&self, a: f64, b: f64) -> f64;

    /// E[max(-X, 0)]: expected deficit depth.
    fn mean_neg_part(&self) -> f64 {
        -self.partial_mean(f64::NEG_INFINITY, 0.0)
    }

    /// E[max(X, 0)]: expected surplus.
    fn mean_pos_part(&self) -> f64 {
        self.partial_mean(0.0, f64::INFINITY)
    }
}

// ── slot mechanics ──

/// True iff the slot is a loss-of-load event: the deficit is strictly deeper
/// than generation capacity plus the fastest feasible discharge.
#[inline]
pub fn loss_of_load(params: &SystemParams, s: StorageState, delta: NetGenSample) -> bool {
    delta.delta < -params.g_max.mw() - params.discharge_cap(s.s)
}

/// Feasibility predicate: box constraints, the power balance with the
/// loss-of-load clamp, and the storage bounds on the successor state.
pub fn feasible(params: &SystemParams, s: StorageState, delta: NetGenSample, dec: Decision) -> bool {
    feasibility_failure(params, s, delta, dec).is_none()
}

/// First violated constraint, if any (used for error reporting).
fn feasibility_failure(
    params: &SystemParams,
    s: StorageState,
    delta: NetGenSample,
    dec: Decision,
) -> Option<&'static str> {
    let Decision { g, c, d } = dec;
    if !(g >= -FEAS_TOL) || g > params.g_max.mw() + FEAS_TOL {
        return Some("generation outside [0, g_max]");
    }
    if !(c >= -FEAS_TOL) || c > params.c_max + FEAS_TOL {
        return Some("charge outside [0, c_max]");
    }
    if !(d >= -FEAS_TOL) || d > params.d_max + FEAS_TOL {
        return Some("discharge outside [0, d_max]");
    }
    // Demand not covered by the clamp must be met: the clamp caps the deficit
    // at what capacity generation plus fastest discharge could absorb.
    let clamp = delta.delta.max(-params.g_max.mw() - params.discharge_cap(s.s));
    if g - c + d + clamp < -FEAS_TOL {
        return Some("power balance shortfall");
    }
    let next_s = s.s + params.eta_c * c - d / params.eta_d;
    if next_s < -FEAS_TOL || next_s > params.s_max + FEAS_TOL {
        return Some("next state outside [0, s_max]");
    }
    None
}

/// Snap values that should sit exactly on a storage boundary back onto it, so
/// that stationary atoms at empty/full remain detectable by exact comparison.
#[inline]
fn snap_state(x: f64, s_max: f64) -> f64 {
    if x.abs() <= FEAS_TOL {
        0.0
    } else if s_max.is_finite() && (x - s_max).abs() <= FEAS_TOL {
        s_max
    } else {
        x
    }
}

/// Advance one slot.
///
/// On a loss-of-load slot the provided decision is ignored and the forced
/// decision applies: `g = g_max`, `c = 0`, `d = min(eta_d * s, d_max)`.
/// Otherwise the decision must be feasible.
pub fn step(
    params: &SystemParams,
    s: StorageState,
    delta: NetGenSample,
    dec: Decision,
) -> Result<SlotOutcome, ModelError> {
    if loss_of_load(params, s, delta) {
        let d = params.discharge_cap(s.s);
        return Ok(SlotOutcome {
            next_s: snap_state(s.s - d / params.eta_d, params.s_max),
            lost_load: true,
            curtailed: 0.0,
            g_used: params.g_max.mw(),
        });
    }
    if let Some(reason) = feasibility_failure(params, s, delta, dec) {
        return Err(ModelError::InfeasibleDecision {
            reason,
            g: dec.g,
            c: dec.c,
            d: dec.d,
            s: s.s,
            delta: delta.delta,
        });
    }
    let next_s = snap_state(s.s + params.eta_c * dec.c - dec.d / params.eta_d, params.s_max);
    let balance = dec.g + dec.d - dec.c + delta.delta;
    Ok(SlotOutcome {
        next_s,
        lost_load: false,
        curtailed: balance.max(0.0),
        g_used: dec.g,
    })
}
