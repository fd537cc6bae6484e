//! Closed-form results for IID Laplace net surplus.
//!
//! Under the generation-minimizing policy with zero-location Laplace
//! disturbances and non-binding rate caps, the storage chain has a known
//! stationary law. This module provides the resulting average generation
//! cost, its sensitivity to storage capacity, the stationary distributions of
//! stored power and dispatched generation, the loss-of-load probability,
//! asymptotic limits, decay-rate bounds for the loss-minimizing policy, and a
//! quadrature residual that verifies the average-cost optimality equation for
//! the constructed bias function.
//!
//! Conventions: `b` is the Laplace scale (`lambda = 1/b`), `alpha = eta_c *
//! eta_d` the round-trip efficiency, and the lossless case `alpha = 1` is
//! handled by dedicated limit branches because the generic expressions
//! degenerate to 0/0 there.

use crate::model::{Disturbance, SystemParams};
use crate::numeric;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for the expectation integrals evaluated by quadrature.
const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    /// The closed form does not cover this model (nonzero location, binding
    /// rate caps, lossless storage where the expression is singular, ...).
    #[error("unsupported model for this closed form: {0}")]
    UnsupportedModel(String),
    /// A stated validity condition fails for these parameters.
    #[error("condition violated: {0}")]
    ConditionViolated(String),
}

// ── Laplace disturbance ──

/// Two-sided exponential (Laplace) model of the net surplus:
/// density `exp(-|x - mu| / b) / (2 b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceModel {
    /// Location (MW).
    pub mu: f64,
    /// Scale `b = 1/lambda` (MW), strictly positive.
    pub b: f64,
}

impl LaplaceModel {
    pub fn new(mu: f64, b: f64) -> Result<Self, AnalyticsError> {
        if !mu.is_finite() || !(b > 0.0) || !b.is_finite() {
            return Err(AnalyticsError::UnsupportedModel(format!(
                "Laplace needs finite mu and scale b > 0, got mu={mu}, b={b}"
            )));
        }
        Ok(LaplaceModel { mu, b })
    }

    /// Zero-location model.
    pub fn standard(b: f64) -> Result<Self, AnalyticsError> {
        Self::new(0.0, b)
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        1.0 / self.b
    }

    /// Standard deviation (`sqrt(2) * b`).
    #[inline]
    pub fn sigma(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.b
    }
}

impl Disturbance for LaplaceModel {
    fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.b;
        if z <= 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0);
        let t = u - 0.5;
        self.mu - self.b * t.signum() * (1.0 - 2.0 * t.abs()).ln()
    }

    fn pdf(&self, x: f64) -> Option<f64> {
        Some((-(x - self.mu).abs() / self.b).exp() / (2.0 * self.b))
    }

    fn partial_mean(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        // Branch antiderivatives of t*pdf(t); each one is only valid on its
        // own side of mu, and they do NOT agree at mu (the difference there
        // is exactly mu), so straddling intervals must be split.
        let lo = |x: f64| {
            if x == f64::NEG_INFINITY {
                0.0
            } else {
                0.5 * ((x - self.mu) / self.b).exp() * (x - self.b)
            }
        };
        let hi = |x: f64| {
            if x == f64::INFINITY {
                0.0
            } else {
                -0.5 * (-(x - self.mu) / self.b).exp() * (x + self.b)
            }
        };
        if b <= self.mu {
            lo(b) - lo(a)
        } else if a >= self.mu {
            hi(b) - hi(a)
        } else {
            (lo(self.mu) - lo(a)) + (hi(b) - hi(self.mu))
        }
    }
}

// ── shared closed-form quantities ──

/// Precomputed pieces of the stationary-law expressions (requires alpha < 1).
struct Regime {
    lam: f64,
    alpha: f64,
    /// Exponent rate of the stationary storage density.
    x: f64,
    /// `exp(-x * s_max)`; 0 when storage is unbounded.
    q: f64,
    /// `1 - alpha * q`, computed in a cancellation-free form.
    denom: f64,
    /// `1 - exp(-lam * g_max)`; 1 when generation is unbounded.
    egm: f64,
}

fn regime(p: &SystemParams, lap: &LaplaceModel) -> Regime {
    let lam = 1.0 / lap.b;
    let alpha = p.alpha();
    debug_assert!(alpha < 1.0, "lossless case must branch before here");
    let x = 0.5 * lam * (1.0 / p.eta_c - p.eta_d);
    let xs = x * p.s_max;
    Regime {
        lam,
        alpha,
        x,
        q: (-xs).exp(),
        denom: (1.0 - alpha) + alpha * (-(-xs).exp_m1()),
        egm: -(-(lam * p.g_max.mw())).exp_m1(),
    }
}

fn require_zero_location(lap: &LaplaceModel) -> Result<(), AnalyticsError> {
    if lap.mu == 0.0 {
        Ok(())
    } else {
        Err(AnalyticsError::UnsupportedModel(format!(
            "closed form requires a zero-location model, got mu={}",
            lap.mu
        )))
    }
}

fn require_unconstrained(p: &SystemParams) -> Result<(), AnalyticsError> {
    if p.is_unconstrained_rates() {
        Ok(())
    } else {
        Err(AnalyticsError::UnsupportedModel(
            "closed form requires rate caps that never bind".to_string(),
        ))
    }
}

// ── average generation cost ──

/// Long-run average conventional generation under the generation-minimizing
/// policy: `(1 - exp(-lam*g_max)) / (2*lam) * (1 - alpha) / (1 - alpha*q)`.
/// Supports `s_max`/`g_max` infinite (the asymptotic limits fall out).
pub fn jg_closed_form(p: &SystemParams, lap: &LaplaceModel) -> Result<f64, AnalyticsError> {
    require_zero_location(lap)?;
    require_unconstrained(p)?;
    let lam = 1.0 / lap.b;
    let egm = -(-(lam * p.g_max.mw())).exp_m1();
    if p.alpha() == 1.0 {
        if p.s_max.is_infinite() {
            return Ok(0.0);
        }
        return Ok(egm / (2.0 * lam) * 2.0 / (2.0 + lam * p.s_max));
    }
    let r = regime(p, lap);
    Ok(r.egm / (2.0 * lam) * (1.0 - r.alpha) / r.denom)
}

/// Magnitude of the derivative of `jg_closed_form` with respect to `s_max`.
pub fn jg_derivative_smax(p: &SystemParams, lap: &LaplaceModel) -> Result<f64, AnalyticsError> {
    require_zero_location(lap)?;
    require_unconstrained(p)?;
    let lam = 1.0 / lap.b;
    let egm = -(-(lam * p.g_max.mw())).exp_m1();
    if p.alpha() == 1.0 {
        if p.s_max.is_infinite() {
            return Ok(0.0);
        }
        let t = 2.0 + lam * p.s_max;
        return Ok(egm / (t * t));
    }
    let r = regime(p, lap);
    let om = 1.0 - r.alpha;
    Ok(p.eta_d * r.egm * om * om * r.q / (4.0 * r.denom * r.denom))
}

/// Smallest storage capacity at which `jg_closed_form` reaches `target` MW,
/// or None if the target is below the infinite-storage limit. Bisection to
/// 1e-6 MW.
pub fn smax_for_target_jg(
    p: &SystemParams,
    lap: &LaplaceModel,
    target: f64,
) -> Result<Option<f64>, AnalyticsError> {
    require_zero_location(lap)?;
    let at = |s_max: f64| {
        let q = SystemParams::unconstrained(p.g_max, s_max, p.eta_c, p.eta_d)
            .expect("parameters validated by caller");
        jg_closed_form(&q, lap).expect("preconditions checked above")
    };
    let j0 = at(0.0);
    let j_inf = at(f64::INFINITY);
    if target >= j0 {
        return Ok(Some(0.0));
    }
    if target <= j_inf {
        return Ok(None);
    }
    let mut hi = lap.sigma().max(1.0);
    while at(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(None);
        }
    }
    // jg is strictly decreasing in s_max on this bracket
    let (_, upper) = numeric::bisect(|s| at(s) > target, 0.0, hi, 1e-6);
    Ok(Some(upper))
}

/// Storage capacity achieving `fraction` of the maximum possible reduction of
/// the average generation cost (fraction in [0, 1]).
pub fn smax_for_reduction(
    p: &SystemParams,
    lap: &LaplaceModel,
    fraction: f64,
) -> Result<Option<f64>, AnalyticsError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(AnalyticsError::ConditionViolated(format!(
            "reduction fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let at = |s_max: f64| {
        let q = SystemParams::unconstrained(p.g_max, s_max, p.eta_c, p.eta_d)
            .expect("parameters validated by caller");
        jg_closed_form(&q, lap)
    };
    let j0 = at(0.0)?;
    let j_inf = at(f64::INFINITY)?;
    // convex form: exact at fraction 0 and 1, so the endpoints map to
    // Some(0.0) and None without rounding luck
    smax_for_target_jg(p, lap, (1.0 - fraction) * j0 + fraction * j_inf)
}

// ── stationary distributions ──

/// Stationary cdf of the stored power under the generation-minimizing policy.
/// Valid for unbounded `s_max` too (the chain stays positive recurrent as
/// long as alpha < 1).
pub fn stationary_storage_cdf(
    p: &SystemParams,
    lap: &LaplaceModel,
    s: f64,
) -> Result<f64, AnalyticsError> {
    require_zero_location(lap)?;
    require_unconstrained(p)?;
    if s < 0.0 {
        return Ok(0.0);
    }
    if p.s_max.is_finite() && s >= p.s_max {
        return Ok(1.0);
    }
    if p.alpha() == 1.0 {
        if p.s_max.is_infinite() {
            return Err(AnalyticsError::UnsupportedModel(
                "no stationary distribution: lossless storage with unbounded capacity".to_string(),
            ));
        }
        let lam = 1.0 / lap.b;
        return Ok((1.0 + lam * s) / (2.0 + lam * p.s_max));
    }
    let r = regime(p, lap);
    Ok((1.0 - 0.5 * (1.0 + r.alpha) * (-(r.x * s)).exp()) / r.denom)
}

/// Stationary point masses at empty and full storage, `(P(S=0), P(S=s_max))`.
pub fn stationary_storage_atoms(
    p: &SystemParams,
    lap: &LaplaceModel,
) -> Result<(f64, f64), AnalyticsError> {
    require_zero_location(lap)?;
    require_unconstrained(p)?;
    if p.alpha() == 1.0 {
        if p.s_max.is_infinite() {
            return Err(AnalyticsError::UnsupportedModel(
                "no stationary distribution: lossless storage with unbounded capacity".to_string(),
            ));
        }
        let lam = 1.0 / lap.b;
        let m = 1.0 / (2.0 + lam * p.s_max);
        return Ok((m, m));
    }
    let r = regime(p, lap);
    let at0 = 0.5 * (1.0 - r.alpha) / r.denom;
    let at_cap = if p.s_max.is_finite() { r.q * (1.0 - r.alpha) / (2.0 * r.denom) } else { 0.0 };
    Ok((at0, at_cap))
}

/// Stationary cdf of dispatched conventional generation under the
/// generation-minimizing policy.
pub fn stationary_generation_cdf(
    p: &SystemParams,
    lap: &LaplaceModel,
    g: f64,
) -> Result<f64, AnalyticsError> {
    require_zero_location(lap)?;
    require_unconstrained(p)?;
    if g < 0.0 {
        return Ok(0.0);
    }
    if !p.g_max.is_unbounded() && g >= p.g_max.mw() {
        return Ok(1.0);
    }
    let lam = 1.0 / lap.b;
    if p.alpha() == 1.0 {
        if p.s_max.is_infinite() {
            return Ok(1.0); // all variation absorbed: generation is 0 a.s.
        }
        return Ok(1.0 - (-(lam * g)).exp() / (2.0 + lam * p.s_max));
    }
    let r = regime(p, lap);
    Ok(1.0 - (1.0 - r.alpha) * (-(lam * g)).exp() / (2.0 * r.denom))
}

/// Stationary point mass of generation pinned at its capacity.
pub fn stationary_generation_atom_at_cap(
    p: &SystemParams,
    lap: &LaplaceModel,
) -> Result<f64, AnalyticsError> {
    require_zero_location(lap)?;
    require_unconstrained(p)?;
    if p.g_max.is_unbounded() {
        return Ok(0.0);
    }
    let lam = 1.0 / lap.b;
    let e = (-(lam * p.g_max.mw())).exp();
    if p.alpha() == 1.0 {
        if p.s_max.is_infinite() {
            return Ok(0.0);
        }
        return Ok(e / (2.0 + lam * p.s_max));
    }
    let r = regime(p, lap);
    Ok((1.0 - r.alpha) * e / (2.0 * r.denom))
}

// ── loss of load ──

/// Long-run loss-of-load probability under the generation-minimizing policy.
pub fn lolp_under_min_generation(
    p: &SystemParams,
    lap: &LaplaceModel,
) -> Result<f64, AnalyticsError> {
    require_zero_location(lap)?;
    require_unconstrained(p)?;
    let lam = 1.0 / lap.b;
    let e = (-(lam * p.g_max.mw())).exp();
    if p.alpha() == 1.0 {
        if p.s_max.is_infinite() {
            return Ok(0.0);
        }
        return Ok(e / (2.0 + lam * p.s_max));
    }
    let r = regime(p, lap);
    Ok(0.5 * e * (1.0 - r.alpha) / r.denom)
}

// ── asymptotics ──

/// Limit of the average generation cost for unlimited generation and storage
/// capacity: `max(E[delta^-] - alpha * E[delta^+], 0)`. Works for any
/// disturbance with a `partial_mean`.
pub fn jg_asymptotic(dist: &dyn Disturbance, alpha: f64) -> f64 {
    (dist.mean_neg_part() - alpha * dist.mean_pos_part()).max(0.0)
}

// ── decay-rate bounds for the loss-minimizing policy ──

/// Exponential decay-rate window for the loss-of-load probability as a
/// function of storage capacity, `[gamma_min, gamma_max]`, both negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    /// Fast bound: `-eta_d * lambda` (1/MW).
    pub gamma_min: f64,
    /// Slow bound: `-lambda_0` from the stationary-tail construction (1/MW).
    pub gamma_max: f64,
}

/// Two-sided exponent bounds on how fast the loss-of-load probability decays
/// in `s_max` under the loss-minimizing policy. Requires
/// `alpha > exp(-lam*g_max)` (otherwise the slow bound's rate is
/// nonpositive and no exponential decay is guaranteed).
pub fn lolp_rate_bounds(
    p: &SystemParams,
    lap: &LaplaceModel,
) -> Result<RateBounds, AnalyticsError> {
    require_zero_location(lap)?;
    require_unconstrained(p)?;
    let lam = 1.0 / lap.b;
    let alpha = p.alpha();
    let e = (-(lam * p.g_max.mw())).exp();
    if !(alpha > e) {
        return Err(AnalyticsError::ConditionViolated(format!(
            "need alpha > exp(-g_max/b): alpha={alpha}, exp(-g_max/b)={e}"
        )));
    }
    let lam0 = lam * (alpha - e) / (p.eta_c * (1.0 + e));
    Ok(RateBounds { gamma_min: -p.eta_d * lam, gamma_max: -lam0 })
}

/// Numeric check of the sufficient conditions for the loss-of-load cost to
/// vanish as storage grows: a bounded `x * F(-x)` tail and positive expected
/// net inflow `E[alpha*(g_max+delta)^+ - (g_max+delta)^-]`.
pub fn check_lolp_asymp_conditions(dist: &dyn Disturbance, p: &SystemParams) -> bool {
    // tail: sample x*F(-x) on a geometric grid; the far half must not exceed
    // the near half (a growing sequence means the limsup is unbounded)
    let spread = (dist.quantile(0.975) - dist.quantile(0.025)).abs().max(1.0);
    let vals: Vec<f64> = (0..=30)
        .map(|k| {
            let x = spread * 2f64.powi(k);
            x * dist.cdf(-x)
        })
        .collect();
    let head = vals[..16].iter().cloned().fold(0.0, f64::max);
    let tail = vals[16..].iter().cloned().fold(0.0, f64::max);
    let tail_ok = tail <= head * (1.0 + 1e-9) + 1e-12;

    let g = p.g_max.mw();
    let positive_ok = if g.is_infinite() {
        true
    } else {
        // E[(g+delta)^+] and E[(g+delta)^-] via the partial mean
        let pos = dist.partial_mean(-g, f64::INFINITY) + g * (1.0 - dist.cdf(-g));
        let neg = -(dist.partial_mean(f64::NEG_INFINITY, -g) + g * dist.cdf(-g));
        p.alpha() * pos - neg > 0.0
    };
    tail_ok && positive_ok
}

// ── optimality-equation residual ──

/// Verifies the average-cost optimality equation for the constructed bias
/// function: returns `max over s_grid of |eta + v(s) - E[g(s, delta) +
/// v(next_s)]|`, with the expectation split over the five decision regions of
/// the generation-minimizing policy (closed forms where available, adaptive
/// quadrature elsewhere). A correct construction keeps this at quadrature
/// noise level.
pub fn acoe_residual(
    p: &SystemParams,
    lap: &LaplaceModel,
    s_grid: &[f64],
) -> Result<f64, AnalyticsError> {
    require_zero_location(lap)?;
    require_unconstrained(p)?;
    if !p.s_max.is_finite() {
        return Err(AnalyticsError::UnsupportedModel(
            "residual check requires finite s_max".to_string(),
        ));
    }
    if p.alpha() == 1.0 {
        return Err(AnalyticsError::UnsupportedModel(
            "bias function is singular for lossless storage".to_string(),
        ));
    }
    let r = regime(p, lap);
    let eta = r.egm / (2.0 * r.lam) * (1.0 - r.alpha) / r.denom;
    let a_coef = p.eta_d * r.egm / r.denom;
    let b_coef = (1.0 / r.lam) * ((1.0 + r.alpha) / (1.0 - r.alpha)) * r.alpha * r.egm / r.denom;
    let v = |s: f64| -a_coef * s + b_coef * (-(r.x * (p.s_max - s))).exp();
    let gmax = p.g_max.mw();

    let mut worst: f64 = 0.0;
    for &s in s_grid {
        let ds = p.eta_d * s;
        let hi_c = (p.s_max - s) / p.eta_c;
        // region 1: surplus saturates storage, g = 0, next = s_max
        let r1 = v(p.s_max) * (1.0 - lap.cdf(hi_c));
        // region 2: surplus absorbed, g = 0, next = s + eta_c*delta
        let r2 = numeric::quad(
            &|dl: f64| v(s + p.eta_c * dl) * lap.pdf(dl).unwrap(),
            0.0,
            hi_c,
            QUAD_TOL,
        );
        // region 3: deficit met from storage, g = 0, next = s + delta/eta_d
        let r3 = numeric::quad(
            &|dl: f64| v(s + dl / p.eta_d) * lap.pdf(dl).unwrap(),
            -ds,
            0.0,
            QUAD_TOL,
        );
        // region 4: storage drained, g = -delta - eta_d*s, next = 0
        // region 5: loss of load, g = g_max, next = 0
        let (r4, r5);
        if gmax.is_finite() {
            let lo4 = -gmax - ds;
            r4 = (v(0.0) - ds) * (lap.cdf(-ds) - lap.cdf(lo4)) - lap.partial_mean(lo4, -ds);
            r5 = (gmax + v(0.0)) * lap.cdf(lo4);
        } else {
            r4 = (v(0.0) - ds) * lap.cdf(-ds) - lap.partial_mean(f64::NEG_INFINITY, -ds);
            r5 = 0.0;
        }
        let rhs = r1 + r2 + r3 + r4 + r5;
        worst = worst.max((eta + v(s) - rhs).abs());
    }
    Ok(worst)
}
