//! Command executors. Each one drives storesim-core, returns a `results`
//! JSON value plus a one-line report, and the shared wrapper writes the
//! summary envelope; CSV artifacts carry the same provenance stamp in `#`
//! comment lines.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use storesim_core::analytics::{self, AnalyticsError, LaplaceModel};
use storesim_core::data::{self, LocationMode, SchemaConfig};
use storesim_core::dp::{self, CostWeights, Grid};
use storesim_core::model::{self, Disturbance, PowerCap, StorageState, SystemParams};
use storesim_core::policies::{self, PolicyKind};
use storesim_core::sim::{self, SimError, Trace, TraceOrigin};

use crate::config::{
    config_hash, CliResult, DisturbanceSpec, Failure, OrFail, RunConfig, SweepPolicySpec,
};

/// Provenance stamped into every artifact a run produces.
struct Stamp {
    hash: String,
    seed: Option<u64>,
}

pub fn execute(config: &RunConfig, stdout_json: bool) -> CliResult<()> {
    let stamp = Stamp { hash: config_hash(config), seed: config.seed() };
    let (results, line) = dispatch(config, &stamp)?;
    let summary = json!({
        "tool": "storesim",
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": stamp.hash,
        "seed": stamp.seed,
        "config": config,
        "results": results,
    });
    let text =
        format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    write_text(config.out_path(), &text)?;
    if stdout_json {
        print!("{text}");
    } else {
        println!("{line} -> {}", config.out_path().display());
    }
    Ok(())
}

fn dispatch(config: &RunConfig, stamp: &Stamp) -> CliResult<(Value, String)> {
    match config {
        RunConfig::Simulate { params, policy, disturbance, n, seed, s1, slots_csv, .. } => {
            run_simulate(params, *policy, disturbance, *n, *seed, *s1, slots_csv.as_deref(), stamp)
        }
        RunConfig::Analyze { params, laplace_scale, .. } => run_analyze(params, *laplace_scale),
        RunConfig::Fit { input, lags, train_frac, location, resample_minutes, .. } => {
            run_fit(input, *lags, *train_frac, *location, *resample_minutes)
        }
        RunConfig::Sweep {
            g_max,
            eta_c,
            eta_d,
            policy,
            values,
            laplace_mu,
            laplace_scale,
            n,
            seed,
            csv,
            ..
        } => run_sweep(
            *g_max,
            *eta_c,
            *eta_d,
            *policy,
            values,
            *laplace_mu,
            *laplace_scale,
            *n,
            *seed,
            csv,
            stamp,
        ),
        RunConfig::Pareto { params, fractions, laplace_mu, laplace_scale, n, seed, csv, .. } => {
            run_pareto(params, fractions, *laplace_mu, *laplace_scale, *n, *seed, csv, stamp)
        }
        RunConfig::Plan {
            eta_c,
            eta_d,
            jg_target,
            jl_target,
            gmax_values,
            fractions,
            smax_hi,
            smax_tol,
            laplace_scale,
            n,
            seed,
            csv,
            ..
        } => {
            let cfg = sim::PlanConfig {
                eta_c: *eta_c,
                eta_d: *eta_d,
                fractions: fractions.clone(),
                smax_hi: *smax_hi,
                smax_tol: *smax_tol,
                n: *n,
                seed: *seed,
            };
            run_plan(*jg_target, *jl_target, gmax_values, cfg, *laplace_scale, csv, stamp)
        }
        RunConfig::Dp {
            params,
            laplace_scale,
            rho1,
            rho2,
            n_s,
            n_d,
            tol,
            max_iter,
            value_csv,
            policy_csv,
            ..
        } => run_dp(
            params,
            *laplace_scale,
            *rho1,
            *rho2,
            *n_s,
            *n_d,
            *tol,
            *max_iter,
            value_csv.as_deref(),
            policy_csv.as_deref(),
            stamp,
        ),
    }
}

// ── failure classification and file helpers ──

/// Configuration-shaped simulation errors exit 1; infeasibilities discovered
/// while stepping the model exit 2.
fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::Policy(_) | SimError::Model(_) => Failure::Runtime(e.to_string()),
        _ => Failure::Config(e.to_string()),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn write_csv(path: &Path, stamp: &Stamp, header: &str, rows: &[String]) -> CliResult<()> {
    let mut text = String::new();
    text.push_str(&format!("# tool: storesim {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("# config_hash: {}\n", stamp.hash));
    if let Some(seed) = stamp.seed {
        text.push_str(&format!("# seed: {seed}\n"));
    }
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_text(path, &text)
}

/// Empty cell for absent optional values.
fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ── simulate ──

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    params: &SystemParams,
    policy: PolicyKind,
    disturbance: &DisturbanceSpec,
    n: usize,
    seed: u64,
    s1: f64,
    slots_csv: Option<&Path>,
    stamp: &Stamp,
) -> CliResult<(Value, String)> {
    let (trace, model_dist) = match disturbance {
        DisturbanceSpec::Laplace { mu, b } => {
            let lap = LaplaceModel::new(*mu, *b).or_config()?;
            let trace = sim::sample_iid_stream(&lap, n, seed, 0).map_err(sim_failure)?;
            (trace, Some(lap))
        }
        DisturbanceSpec::Trace { path } => {
            let series = data::load_timeseries(path, &SchemaConfig::default())
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let trace = Trace::from_values(
                series.values,
                TraceOrigin::File { path: path.display().to_string() },
            )
            .map_err(sim_failure)?;
            (trace, None)
        }
    };
    let smoothing = model_dist.as_ref().map(|lap| lap as &dyn Disturbance);
    let report = sim::run_trace(params, policy, &trace, s1, smoothing).map_err(sim_failure)?;
    if let Some(path) = slots_csv {
        write_slots_csv(path, stamp, params, policy, &trace, s1)?;
    }
    let mut results = serde_json::to_value(report).expect("report serializes");
    results["j_l"] = json!(report.j_l());
    let line = format!(
        "simulate: {} slots, j_g {} MW, j_l {}, curtailed {} MW",
        report.n,
        report.j_g,
        report.j_l(),
        report.curtailed_avg
    );
    Ok((results, line))
}

fn write_slots_csv(
    path: &Path,
    stamp: &Stamp,
    params: &SystemParams,
    policy: PolicyKind,
    trace: &Trace,
    s1: f64,
) -> CliResult<()> {
    let mut rows = Vec::with_capacity(trace.len());
    let mut s = s1;
    for (slot, &delta) in trace.deltas.iter().enumerate() {
        let state = StorageState::new(s);
        let dec = policies::decide(params, policy, state, delta.into()).or_runtime()?;
        let out = model::step(params, state, delta.into(), dec).or_runtime()?;
        // on loss slots the executed decision is the forced one
        let (c, d) = if out.lost_load { (0.0, params.discharge_cap(s)) } else { (dec.c, dec.d) };
        rows.push(format!(
            "{slot},{delta},{s},{},{c},{d},{},{},{}",
            out.g_used,
            out.next_s,
            u8::from(out.lost_load),
            out.curtailed
        ));
        s = out.next_s;
    }
    write_csv(path, stamp, "slot,delta,s,g,c,d,next_s,lost_load,curtailed", &rows)
}

// ── analyze ──

fn run_analyze(params: &SystemParams, scale: f64) -> CliResult<(Value, String)> {
    let lap = LaplaceModel::standard(scale).or_config()?;
    let j_g = analytics::jg_closed_form(params, &lap).or_config()?;
    let j_g_slope = analytics::jg_derivative_smax(params, &lap).or_config()?;
    let j_l = analytics::lolp_under_min_generation(params, &lap).or_config()?;
    let j_g_asymptotic = analytics::jg_asymptotic(&lap, params.alpha());
    let storage_atoms = match analytics::stationary_storage_atoms(params, &lap) {
        Ok((empty, full)) => json!({ "empty": empty, "full": full }),
        Err(_) => Value::Null,
    };
    let generation_atom_at_cap = match analytics::stationary_generation_atom_at_cap(params, &lap)
    {
        Ok(mass) => json!(mass),
        Err(_) => Value::Null,
    };
    let rate_bounds = match analytics::lolp_rate_bounds(params, &lap) {
        Ok(bounds) => serde_json::to_value(bounds).expect("bounds serialize"),
        Err(AnalyticsError::ConditionViolated(_)) => json!("condition violated"),
        Err(e) => return Err(Failure::Config(e.to_string())),
    };
    let decay_conditions_hold = analytics::check_lolp_asymp_conditions(&lap, params);
    let results = json!({
        "j_g": j_g,
        "j_g_derivative_smax": j_g_slope,
        "j_l": j_l,
        "j_g_asymptotic": j_g_asymptotic,
        "storage_atoms": storage_atoms,
        "generation_atom_at_cap": generation_atom_at_cap,
        "rate_bounds": rate_bounds,
        "decay_conditions_hold": decay_conditions_hold,
    });
    let line = format!("analyze: j_g {j_g} MW, j_l {j_l}, asymptote {j_g_asymptotic} MW");
    Ok((results, line))
}

// ── fit ──

fn run_fit(
    input: &Path,
    lags: usize,
    train_frac: f64,
    location: LocationMode,
    resample_minutes: Option<u32>,
) -> CliResult<(Value, String)> {
    let cfg = SchemaConfig { resample_minutes, label: None };
    let series = data::load_timeseries(input, &cfg)
        .map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
    let len = series.values.len();
    let split = ((len as f64) * train_frac).round() as usize;
    if split <= lags + 1 || split >= len {
        return Err(Failure::Config(format!(
            "cannot split {len} samples at {split} with {lags} lags; adjust --train-frac"
        )));
    }
    let predictor = data::fit_predictor(&series, lags, lags..split).or_runtime()?;
    let residuals = data::residuals(&predictor, &series, split..len).or_runtime()?;
    let laplace = data::fit_laplace(&residuals.values, location).or_runtime()?;
    let ks = data::ks_distance(&residuals.values, &laplace).or_runtime()?;
    let results = json!({
        "series": {
            "label": series.label,
            "samples": len,
            "step_seconds": series.step.num_seconds(),
            "mean": series.mean(),
        },
        "predictor": predictor,
        "residual_count": residuals.values.len(),
        "laplace": { "mu": laplace.mu, "b": laplace.b, "sigma": laplace.sigma() },
        "ks_distance": ks,
    });
    let line = format!(
        "fit: {lags} lags on {len} samples, laplace scale {} MW (mu {}), residual KS {ks}",
        laplace.b, laplace.mu
    );
    Ok((results, line))
}

// ── sweep ──

#[allow(clippy::too_many_arguments)]
fn run_sweep(
    g_max: PowerCap,
    eta_c: f64,
    eta_d: f64,
    policy: SweepPolicySpec,
    values: &[f64],
    laplace_mu: f64,
    laplace_scale: f64,
    n: usize,
    seed: u64,
    csv: &Path,
    stamp: &Stamp,
) -> CliResult<(Value, String)> {
    let lap = LaplaceModel::new(laplace_mu, laplace_scale).or_config()?;
    // the sweep only reads g_max and the efficiencies off the base parameters
    let base_smax = values.iter().fold(1.0f64, |a, &b| a.max(b));
    let base = SystemParams::unconstrained(g_max, base_smax, eta_c, eta_d).or_config()?;
    let result = sim::sweep_capacity(&base, policy.to_sweep_policy(), &lap, values, n, seed)
        .map_err(sim_failure)?;
    let rows: Vec<String> = result
        .points
        .iter()
        .map(|p| {
            let r = p.report.as_ref().expect("sweep evaluates every point");
            format!(
                "{},{},{},{},{},{},{}",
                p.axis,
                r.j_g,
                r.j_l_event,
                cell(r.j_l_smoothed),
                r.curtailed_avg,
                cell(p.thresholds.map(|t| t.s_c)),
                cell(p.thresholds.map(|t| t.s_d)),
            )
        })
        .collect();
    write_csv(csv, stamp, "smax,j_g,j_l_event,j_l_smoothed,curtailed_avg,s_c,s_d", &rows)?;
    let results = serde_json::to_value(&result).expect("sweep serializes");
    let line = format!(
        "sweep: {} points, smax {} to {} MW under {}, curve in {}",
        result.points.len(),
        values.first().expect("validated non-empty"),
        values.last().expect("validated non-empty"),
        result.policy,
        csv.display()
    );
    Ok((results, line))
}

// ── pareto ──

#[allow(clippy::too_many_arguments)]
fn run_pareto(
    params: &SystemParams,
    fractions: &[f64],
    laplace_mu: f64,
    laplace_scale: f64,
    n: usize,
    seed: u64,
    csv: &Path,
    stamp: &Stamp,
) -> CliResult<(Value, String)> {
    let lap = LaplaceModel::new(laplace_mu, laplace_scale).or_config()?;
    let result =
        sim::pareto_two_threshold(params, &lap, fractions, n, seed).map_err(sim_failure)?;
    let rows: Vec<String> = result
        .points
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{},{},{}",
                p.thresholds.s_c,
                p.thresholds.s_d,
                p.report.j_g,
                p.report.j_l(),
                p.report.j_l_event,
                u8::from(p.on_frontier)
            )
        })
        .collect();
    write_csv(csv, stamp, "s_c,s_d,j_g,j_l,j_l_event,on_frontier", &rows)?;
    let frontier_size = result.frontier().count();
    let mut results = serde_json::to_value(&result).expect("frontier serializes");
    results["frontier_size"] = json!(frontier_size);
    let line = format!(
        "pareto: {} threshold pairs, {} on the frontier, curve in {}",
        result.points.len(),
        frontier_size,
        csv.display()
    );
    Ok((results, line))
}

// ── plan ──

fn run_plan(
    jg_target: f64,
    jl_target: f64,
    gmax_values: &[f64],
    cfg: sim::PlanConfig,
    laplace_scale: f64,
    csv: &Path,
    stamp: &Stamp,
) -> CliResult<(Value, String)> {
    let lap = LaplaceModel::standard(laplace_scale).or_config()?;
    let result =
        sim::plan_curve(&lap, jg_target, jl_target, gmax_values, &cfg).map_err(sim_failure)?;
    let rows: Vec<String> = result
        .points
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{},{},{},{}",
                p.axis,
                cell(p.smax),
                cell(p.thresholds.map(|t| t.s_c)),
                cell(p.thresholds.map(|t| t.s_d)),
                cell(p.report.map(|r| r.j_g)),
                cell(p.report.map(|r| r.j_l())),
                u8::from(p.feasible)
            )
        })
        .collect();
    write_csv(csv, stamp, "gmax,smax,s_c,s_d,j_g,j_l,feasible", &rows)?;
    let feasible = result.points.iter().filter(|p| p.feasible).count();
    let results = serde_json::to_value(&result).expect("plan serializes");
    let line = format!(
        "plan: {feasible}/{} capacities meet j_g <= {jg_target} and j_l <= {jl_target}, curve in {}",
        result.points.len(),
        csv.display()
    );
    Ok((results, line))
}

// ── dp ──

#[allow(clippy::too_many_arguments)]
fn run_dp(
    params: &SystemParams,
    laplace_scale: f64,
    rho1: f64,
    rho2: f64,
    n_s: usize,
    n_d: usize,
    tol: f64,
    max_iter: usize,
    value_csv: Option<&Path>,
    policy_csv: Option<&Path>,
    stamp: &Stamp,
) -> CliResult<(Value, String)> {
    let lap = LaplaceModel::standard(laplace_scale).or_config()?;
    let weights = CostWeights::new(rho1, rho2).or_config()?;
    let grid = Grid::regular(params, &lap, n_s, n_d).or_config()?;
    let solution = dp::value_iteration(params, &lap, weights, &grid, tol, max_iter).or_runtime()?;
    let (thresholds, two_threshold, deviation) = dp::extract_thresholds(&solution, &grid);
    if let Some(path) = value_csv {
        let rows: Vec<String> =
            grid.s_values.iter().zip(&solution.v).map(|(s, v)| format!("{s},{v}")).collect();
        write_csv(path, stamp, "s,v", &rows)?;
    }
    if let Some(path) = policy_csv {
        let mut rows = Vec::with_capacity(grid.n_s * grid.n_d);
        for (i, &s) in grid.s_values.iter().enumerate() {
            for (k, &(delta, prob)) in grid.d_values.iter().enumerate() {
                let dec = &solution.policy[i * grid.n_d + k];
                rows.push(format!("{s},{delta},{prob},{},{},{}", dec.g, dec.c, dec.d));
            }
        }
        write_csv(path, stamp, "s,delta,prob,g,c,d", &rows)?;
    }
    let results = json!({
        "eta": solution.eta,
        "iterations": solution.iterations,
        "span_residual": solution.span_residual,
        "thresholds": thresholds,
        "two_threshold": two_threshold,
        "threshold_deviation": deviation,
        "grid": { "n_s": grid.n_s, "n_d": grid.n_d, "spacing": grid.spacing() },
    });
    let line = format!(
        "dp: eta {} after {} iterations, thresholds ({}, {}), two-threshold: {two_threshold}",
        solution.eta, solution.iterations, thresholds.s_c, thresholds.s_d
    );
    Ok((results, line))
}
