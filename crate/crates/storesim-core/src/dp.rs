//! Average-cost dynamic programming for the weighted objective
//! `rho1 * (average generation) + rho2 * (loss-of-load frequency)`.
//!
//! The storage state is discretized on a uniform grid and the disturbance on
//! equal-probability quantile bins (one point per bin at the bin's
//! conditional mean, which preserves the disturbance's first moment exactly).
//! Relative value iteration then solves the average-cost criterion; the
//! per-cell minimization is organized around the observation that an action
//! is fully described by the chosen next state `s2`, with the slot's
//! generation forced to the smallest feasible value
//! `g = max(0, -delta + max((s2-s)/eta_c, eta_d*(s2-s)))`.
//!
//! Because that cost is piecewise linear in `s2` with value-function terms
//! attached, each region's minimum over grid nodes reduces to a range-minimum
//! query over a precomputed array, keeping a full sweep at O(states x bins).

use crate::model::{Decision, Disturbance, SystemParams};
use crate::numeric::{self, RangeMin};
use crate::policies::ThresholdPair;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("value iteration did not converge in {max_iter} sweeps (span residual {span_residual:.3e})")]
    NoConvergence { max_iter: usize, span_residual: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
}

// ── types ──

/// Weights of the two cost components: `rho1` per MW of generation, `rho2`
/// per loss-of-load event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostWeights {
    pub rho1: f64,
    pub rho2: f64,
}

impl CostWeights {
    pub fn new(rho1: f64, rho2: f64) -> Result<Self, DpError> {
        if !(rho1 >= 0.0 && rho2 >= 0.0) || !rho1.is_finite() || !rho2.is_finite() {
            return Err(DpError::InvalidWeights(format!(
                "weights must be finite and >= 0, got rho1={rho1}, rho2={rho2}"
            )));
        }
        if rho1 == 0.0 && rho2 == 0.0 {
            return Err(DpError::InvalidWeights("weights must not both be zero".to_string()));
        }
        Ok(CostWeights { rho1, rho2 })
    }
}

/// State and disturbance discretization.
#[derive(Debug, Clone)]
pub struct Grid {
    pub n_s: usize,
    pub n_d: usize,
    /// Strictly increasing storage levels spanning [0, s_max].
    pub s_values: Vec<f64>,
    /// Disturbance support points with probabilities.
    pub d_values: Vec<(f64, f64)>,
}

impl Grid {
    /// Uniform state grid plus equal-probability quantile bins for the
    /// disturbance, each bin represented by its conditional mean.
    pub fn regular(
        params: &SystemParams,
        dist: &dyn Disturbance,
        n_s: usize,
        n_d: usize,
    ) -> Result<Grid, DpError> {
        if !params.s_max.is_finite() || params.s_max <= 0.0 {
            return Err(DpError::InvalidGrid(format!(
                "state grid needs finite s_max > 0, got {}",
                params.s_max
            )));
        }
        if n_s < 2 || n_d < 1 {
            return Err(DpError::InvalidGrid(format!(
                "need at least 2 state points and 1 disturbance bin, got {n_s}/{n_d}"
            )));
        }
        let h = params.s_max / (n_s - 1) as f64;
        let mut s_values: Vec<f64> = (0..n_s).map(|i| i as f64 * h).collect();
        s_values[n_s - 1] = params.s_max;
        let p = 1.0 / n_d as f64;
        let d_values = (0..n_d)
            .map(|j| {
                let lo = if j == 0 { f64::NEG_INFINITY } else { dist.quantile(j as f64 * p) };
                let hi = if j == n_d - 1 {
                    f64::INFINITY
                } else {
                    dist.quantile((j + 1) as f64 * p)
                };
                // conditional mean of the bin, scaled by its nominal mass
                (dist.partial_mean(lo, hi) / p, p)
            })
            .collect();
        let g = Grid { n_s, n_d, s_values, d_values };
        g.validate(params.s_max)?;
        Ok(g)
    }

    pub fn validate(&self, s_max: f64) -> Result<(), DpError> {
        if self.s_values.len() != self.n_s || self.d_values.len() != self.n_d {
            return Err(DpError::InvalidGrid("length fields disagree with the vectors".into()));
        }
        if self.n_s < 2 {
            return Err(DpError::InvalidGrid("need at least 2 state points".into()));
        }
        if !self.s_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(DpError::InvalidGrid("state values must be strictly increasing".into()));
        }
        let first = self.s_values[0];
        let last = *self.s_values.last().unwrap();
        if first.abs() > 1e-9 || (last - s_max).abs() > 1e-9 * (1.0 + s_max.abs()) {
            return Err(DpError::InvalidGrid(format!(
                "state grid must span [0, s_max], got [{first}, {last}] for s_max={s_max}"
            )));
        }
        let mass: f64 = self.d_values.iter().map(|&(_, p)| p).sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(DpError::InvalidGrid(format!("bin masses sum to {mass}, expected 1")));
        }
        if self.d_values.iter().any(|&(x, p)| !x.is_finite() || !(p > 0.0)) {
            return Err(DpError::InvalidGrid("bins need finite points and positive mass".into()));
        }
        Ok(())
    }

    /// Largest gap between adjacent state points.
    pub fn spacing(&self) -> f64 {
        self.s_values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Converged solution of the average-cost problem on a grid.
#[derive(Debug, Clone)]
pub struct DpSolution {
    /// Optimal average cost per slot.
    pub eta: f64,
    /// Bias (relative value) per state grid point, anchored at v[0] = 0.
    pub v: Vec<f64>,
    /// Minimizing decision per (state, disturbance bin), row-major.
    pub policy: Vec<Decision>,
    pub iterations: usize,
    pub span_residual: f64,
    /// Configuration the solution was computed under.
    pub params: SystemParams,
    pub weights: CostWeights,
}

// ── per-cell minimization ──

/// Immutable per-sweep context: the value function and its shifted variants
/// (`w_d = v + rho1*eta_d*s`, `w_c = v + rho1*s/eta_c`) with range-minimum
/// tables over the grid nodes.
struct Sweep<'a> {
    s: &'a [f64],
    rm_v: RangeMin,
    rm_wd: RangeMin,
    rm_wc: RangeMin,
    p: SystemParams,
    rho1: f64,
    rho2: f64,
}

impl<'a> Sweep<'a> {
    fn new(s: &'a [f64], v: &[f64], p: &SystemParams, w: CostWeights) -> Self {
        let wd: Vec<f64> = s.iter().zip(v).map(|(&sj, &vj)| vj + w.rho1 * p.eta_d * sj).collect();
        let wc: Vec<f64> = s.iter().zip(v).map(|(&sj, &vj)| vj + w.rho1 / p.eta_c * sj).collect();
        Sweep {
            s,
            rm_v: RangeMin::new(v.to_vec()),
            rm_wd: RangeMin::new(wd),
            rm_wc: RangeMin::new(wc),
            p: *p,
            rho1: w.rho1,
            rho2: w.rho2,
        }
    }

    /// Minimum of `base + interp(w)(s2)` over `s2 in [a, b]`, considering the
    /// two off-grid endpoints and the grid nodes strictly inside. Candidates
    /// are fed to `consider` in ascending s2 order.
    fn scan_region(
        &self,
        table: &RangeMin,
        a: f64,
        b: f64,
        base: f64,
        best: &mut (f64, f64),
    ) {
        if !(a <= b) {
            return;
        }
        let w = table.values();
        let consider = |cost: f64, s2: f64, best: &mut (f64, f64)| {
            if cost < best.0 {
                *best = (cost, s2);
            }
        };
        consider(base + numeric::lerp_sorted(self.s, w, a), a, best);
        let i_lo = self.s.partition_point(|&x| x < a);
        let i_hi = self.s.partition_point(|&x| x <= b);
        if i_lo < i_hi {
            let j = table.query(i_lo, i_hi - 1);
            consider(base + table.value(j), self.s[j], best);
        }
        consider(base + numeric::lerp_sorted(self.s, w, b), b, best);
    }

    /// Best (cost, next state) for one cell; `forced` marks loss slots.
    fn cell_best(&self, s: f64, delta: f64) -> (f64, f64, bool) {
        let p = &self.p;
        let (ec, ed) = (p.eta_c, p.eta_d);
        let gmax = p.g_max.mw();
        let dcap = p.discharge_cap(s);
        if delta < -gmax - dcap {
            // loss of load: the decision is forced
            let next = (s - dcap / ed).max(0.0);
            let v_next = numeric::lerp_sorted(self.s, self.rm_v.values(), next);
            return (self.rho1 * gmax + self.rho2 + v_next, next, true);
        }

        let lo = (s - p.d_max / ed).max(0.0);
        let head = gmax + delta; // generation headroom net of the deficit
        let hi = if head >= 0.0 {
            (s + ec * head.min(p.c_max)).min(p.s_max)
        } else {
            (s + head / ed).min(p.s_max)
        };
        // largest next state reachable without generating
        let s2_zero = if delta >= 0.0 { s + ec * delta.min(p.c_max) } else { s + delta / ed };

        let mut best = (f64::INFINITY, f64::NAN);
        // zero-generation region
        self.scan_region(&self.rm_v, lo, s2_zero.min(hi), 0.0, &mut best);
        if delta < 0.0 {
            // discharge while generating: g = -delta + eta_d*(s2 - s)
            let a = lo.max(s2_zero);
            let b = s.min(hi);
            self.scan_region(&self.rm_wd, a, b, self.rho1 * (-delta - ed * s), &mut best);
        }
        // charge while generating: g = -delta + (s2 - s)/eta_c, which is only
        // nonnegative from s + eta_c*delta on; beyond the charge-rate cap the
        // region is empty because extra generation cannot be banked
        let a = s.max(s + ec * delta).max(lo);
        if a <= hi {
            self.scan_region(&self.rm_wc, a, hi, self.rho1 * (-delta - s / ec), &mut best);
        }
        debug_assert!(best.0.is_finite(), "empty action set at s={s}, delta={delta}");
        (best.0, best.1, false)
    }

    /// Decision realizing the transition `s -> s2` for disturbance `delta`.
    fn decision_for(&self, s: f64, delta: f64, s2: f64, forced: bool) -> Decision {
        let p = &self.p;
        if forced {
            return Decision { g: p.g_max.mw(), c: 0.0, d: p.discharge_cap(s) };
        }
        let (c, d) = if s2 >= s {
            (((s2 - s) / p.eta_c).max(0.0), 0.0)
        } else {
            (0.0, (p.eta_d * (s - s2)).max(0.0))
        };
        let g = (-delta + ((s2 - s) / p.eta_c).max(p.eta_d * (s2 - s))).max(0.0);
        Decision { g, c, d }
    }
}

// ── value iteration ──

/// Relative value iteration from a zero initial value function.
pub fn value_iteration(
    params: &SystemParams,
    dist: &dyn Disturbance,
    weights: CostWeights,
    grid: &Grid,
    tol: f64,
    max_iter: usize,
) -> Result<DpSolution, DpError> {
    value_iteration_from(params, dist, weights, grid, tol, max_iter, None)
}

/// Relative value iteration with an optional initial value function (used to
/// verify that the converged average cost does not depend on it).
pub fn value_iteration_from(
    params: &SystemParams,
    dist: &dyn Disturbance,
    weights: CostWeights,
    grid: &Grid,
    tol: f64,
    max_iter: usize,
    v0: Option<&[f64]>,
) -> Result<DpSolution, DpError> {
    grid.validate(params.s_max)?;
    CostWeights::new(weights.rho1, weights.rho2)?;
    let _ = dist;
    let n_s = grid.n_s;
    let mut v: Vec<f64> = match v0 {
        Some(init) => {
            if init.len() != n_s {
                return Err(DpError::InvalidGrid(format!(
                    "initial value function has length {}, grid has {n_s} states",
                    init.len()
                )));
            }
            init.to_vec()
        }
        None => vec![0.0; n_s],
    };

    let mut span = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let sweep = Sweep::new(&grid.s_values, &v, params, weights);
        let tv: Vec<f64> = grid
            .s_values
            .par_iter()
            .map(|&s| {
                grid.d_values
                    .iter()
                    .map(|&(delta, prob)| prob * sweep.cell_best(s, delta).0)
                    .sum::<f64>()
            })
            .collect();
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for i in 0..n_s {
            let e = tv[i] - v[i];
            hi = hi.max(e);
            lo = lo.min(e);
        }
        span = hi - lo;
        let eta = 0.5 * (hi + lo);
        let anchor = tv[0];
        for i in 0..n_s {
            v[i] = tv[i] - anchor;
        }
        if span < tol {
            // final pass records the minimizing decisions
            let sweep = Sweep::new(&grid.s_values, &v, params, weights);
            let policy: Vec<Decision> = grid
                .s_values
                .par_iter()
                .flat_map_iter(|&s| {
                    let sweep = &sweep;
                    grid.d_values.iter().map(move |&(delta, _)| {
                        let (_, s2, forced) = sweep.cell_best(s, delta);
                        sweep.decision_for(s, delta, s2, forced)
                    })
                })
                .collect();
            return Ok(DpSolution {
                eta,
                v,
                policy,
                iterations,
                span_residual: span,
                params: *params,
                weights,
            });
        }
    }
    Err(DpError::NoConvergence { max_iter, span_residual: span })
}

// ── threshold extraction ──

/// Fits the nearest two-threshold policy to a numeric policy table.
///
/// Returns the fitted pair, whether the fit is exact to within one grid step
/// (plus feasibility tolerance), and the worst per-cell deviation of the
/// implied next state.
pub fn extract_thresholds(solution: &DpSolution, grid: &Grid) -> (ThresholdPair, bool, f64) {
    let p = &solution.params;
    let (ec, ed) = (p.eta_c, p.eta_d);
    let gmax = p.g_max.mw();
    let tol = 1e-9;
    let next_of = |i: usize, k: usize| {
        let dec = solution.policy[i * grid.n_d + k];
        grid.s_values[i] + ec * dec.c - dec.d / ed
    };

    // cells that charge (resp. discharge) while generating strictly inside
    // (0, g_max) sit exactly at a threshold in a two-threshold policy
    let mut sc_samples = Vec::new();
    let mut sd_samples = Vec::new();
    for i in 0..grid.n_s {
        for k in 0..grid.n_d {
            let dec = solution.policy[i * grid.n_d + k];
            if dec.g > tol && dec.g < gmax - tol {
                if dec.c > tol {
                    sc_samples.push(next_of(i, k));
                } else if dec.d > tol {
                    sd_samples.push(next_of(i, k));
                }
            }
        }
    }
    let sd0 = numeric::median(&sd_samples).unwrap_or(p.s_max).clamp(0.0, p.s_max);
    let sc0 = numeric::median(&sc_samples).unwrap_or(0.0).clamp(0.0, sd0);

    // refine locally: search grid values near the medians for the pair
    // minimizing the worst next-state deviation
    let candidates = |center: f64| -> Vec<f64> {
        let mut c: Vec<f64> = grid
            .s_values
            .iter()
            .copied()
            .filter(|&sv| (sv - center).abs() <= 5.0 * grid.spacing() + tol)
            .collect();
        c.push(center);
        c
    };
    let deviation = |s_c: f64, s_d: f64| -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..grid.n_s {
            let s = grid.s_values[i];
            for k in 0..grid.n_d {
                let delta = grid.d_values[k].0;
                let dec = crate::policies::decide(
                    p,
                    crate::policies::PolicyKind::TwoThreshold(ThresholdPair { s_c, s_d }),
                    crate::model::StorageState::new(s),
                    delta.into(),
                );
                let tt_next = match dec {
                    Ok(d) => s + ec * d.c - d.d / ed,
                    Err(_) => return f64::INFINITY,
                };
                worst = worst.max((next_of(i, k) - tt_next).abs());
            }
        }
        worst
    };
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for &a in &candidates(sc0) {
        for &b in &candidates(sd0) {
            if a <= b {
                pairs.push((a, b));
            }
        }
    }
    let evaluated: Vec<(f64, (f64, f64))> =
        pairs.par_iter().map(|&(a, b)| (deviation(a, b), (a, b))).collect();
    let (mut best_dev, mut best_pair) = (deviation(sc0, sd0), (sc0, sd0));
    for (dev, pair) in evaluated {
        if dev < best_dev {
            best_dev = dev;
            best_pair = pair;
        }
    }
    let pair = ThresholdPair::new(best_pair.0, best_pair.1, p.s_max)
        .expect("candidates are clamped to [0, s_max]");
    (pair, best_dev <= grid.spacing() + 1e-6, best_dev)
}

// ── two-slot construction ──

/// Expected second-slot cost when the last slot starts at `s2`: generation
/// can no longer be banked, so the only cost terms are the deficit beyond the
/// fastest discharge and the loss-of-load event.
pub fn second_slot_cost(
    params: &SystemParams,
    dist: &dyn Disturbance,
    weights: CostWeights,
    s2: f64,
) -> f64 {
    let ed = params.eta_d;
    let g = params.g_max.mw();
    let t = -ed * s2;
    if g.is_finite() {
        let lo = -g - ed * s2;
        (weights.rho1 * g + weights.rho2) * dist.cdf(lo)
            + weights.rho1
                * (-dist.partial_mean(lo, t) - ed * s2 * (dist.cdf(t) - dist.cdf(lo)))
    } else {
        weights.rho1 * (-dist.partial_mean(f64::NEG_INFINITY, t) - ed * s2 * dist.cdf(t))
    }
}

/// First-slot thresholds of the two-slot problem, from the derivative of the
/// second-slot cost: the charge threshold is the last state where
/// `dJ2/dS2 <= -rho1/eta_c`, the discharge threshold where it is
/// `<= -eta_d*rho1`. Requires a density that is nondecreasing on the deficit
/// side, which makes `J2` convex so both points are well defined.
pub fn two_slot_thresholds(
    params: &SystemParams,
    dist: &dyn Disturbance,
    weights: CostWeights,
) -> Result<ThresholdPair, DpError> {
    if !params.s_max.is_finite() {
        return Err(DpError::InvalidGrid("two-slot construction needs finite s_max".to_string()));
    }
    // hypothesis check on a quantile grid of the deficit side
    let p_neg = dist.cdf(0.0).min(1.0 - 1e-12).max(1e-12);
    let mut prev = -f64::INFINITY;
    for j in 0..400 {
        let u = (j as f64 + 0.5) / 400.0 * p_neg;
        let x = dist.quantile(u).min(0.0);
        let f = dist.pdf(x).ok_or_else(|| {
            DpError::HypothesisViolated("construction needs a density".to_string())
        })?;
        if f < prev * (1.0 - 1e-9) - 1e-15 {
            return Err(DpError::HypothesisViolated(format!(
                "density must be nondecreasing on the deficit side; decreases near {x}"
            )));
        }
        prev = f;
    }

    let ed = params.eta_d;
    let g = params.g_max.mw();
    let dj2 = |s2: f64| -> f64 {
        let edge = if g.is_finite() { dist.pdf(-g - ed * s2).unwrap_or(0.0) } else { 0.0 };
        let tail =
            dist.cdf(-ed * s2) - if g.is_finite() { dist.cdf(-g - ed * s2) } else { 0.0 };
        -ed * (weights.rho2 * edge + weights.rho1 * tail)
    };
    // dj2 is nondecreasing; find the last state where it stays below thr
    let sup_where = |thr: f64| -> f64 {
        if dj2(0.0) > thr {
            0.0
        } else if dj2(params.s_max) <= thr {
            params.s_max
        } else {
            numeric::bisect(|s2| dj2(s2) <= thr, 0.0, params.s_max, 1e-10 * params.s_max.max(1.0)).0
        }
    };
    let s_d = sup_where(-ed * weights.rho1);
    let s_c = sup_where(-weights.rho1 / params.eta_c).min(s_d);
    Ok(ThresholdPair::new(s_c, s_d, params.s_max).expect("clamped to [0, s_max]"))
}
