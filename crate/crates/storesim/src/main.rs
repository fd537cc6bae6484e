//! Command-line front end for the storage simulation toolkit. Every
//! invocation resolves its flags into one serializable run config, executes
//! it, and writes a summary JSON stamped with the tool version, a config
//! hash, and the seed; `--config` replays a saved summary bit for bit.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use storesim_core::data::LocationMode;
use storesim_core::model::{PowerCap, SystemParams};
use storesim_core::policies::{PolicyKind, ThresholdPair};

use crate::config::{CliResult, DisturbanceSpec, Failure, OrFail, RunConfig, SweepPolicySpec};

#[derive(Parser)]
#[command(
    name = "storesim",
    version,
    about = "Storage dispatch simulation, closed-form analytics, and capacity planning"
)]
struct Cli {
    /// Replay a saved summary JSON (or its `config` subtree) instead of
    /// giving a command.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker thread count (falls back to STORESIM_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Print the summary JSON to stdout instead of the one-line report.
    #[arg(long, global = true)]
    stdout_json: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dispatch policy and report long-run average costs.
    Simulate(SimulateArgs),
    /// Closed-form costs and stationary laws for the generation-minimizing policy.
    Analyze(AnalyzeArgs),
    /// Fit a lagged linear predictor to a series and a Laplace law to its residuals.
    Fit(FitArgs),
    /// Sweep storage capacity and tabulate the cost curve.
    Sweep(SweepArgs),
    /// Map the generation/loss trade-off of the two-threshold family.
    Pareto(ParetoArgs),
    /// Size generation and storage against cost and reliability targets.
    Plan(PlanArgs),
    /// Solve the average-cost dynamic program on a grid.
    Dp(DpArgs),
}

/// System dimensions shared by model-driven commands.
#[derive(Args)]
struct SystemArgs {
    /// Conventional generation capacity in MW, or "inf".
    #[arg(long, value_parser = parse_cap)]
    gmax: PowerCap,

    /// Storage capacity in MW, or "inf".
    #[arg(long, value_parser = parse_inf_f64)]
    smax: f64,

    /// Round-trip efficiency; split as sqrt unless --eta-c/--eta-d pin a side.
    #[arg(long)]
    alpha: Option<f64>,

    /// Charging efficiency in (0, 1].
    #[arg(long)]
    eta_c: Option<f64>,

    /// Discharging efficiency in (0, 1].
    #[arg(long)]
    eta_d: Option<f64>,

    /// Charge rate cap in MW, or "inf" (default: what fills the store in one slot).
    #[arg(long, value_parser = parse_inf_f64)]
    cmax: Option<f64>,

    /// Discharge rate cap in MW, or "inf" (default: what drains the store in one slot).
    #[arg(long, value_parser = parse_inf_f64)]
    dmax: Option<f64>,

    /// Slot length in hours.
    #[arg(long, default_value_t = 1.0)]
    slot_hours: f64,
}

impl SystemArgs {
    fn resolve(&self) -> CliResult<SystemParams> {
        let (eta_c, eta_d) = resolve_etas(self.alpha, self.eta_c, self.eta_d)?;
        let c_max = self.cmax.unwrap_or(self.smax / eta_c);
        let d_max = self.dmax.unwrap_or(self.smax * eta_d);
        SystemParams::new(self.gmax, self.smax, c_max, d_max, eta_c, eta_d, self.slot_hours)
            .or_config()
    }
}

fn resolve_etas(
    alpha: Option<f64>,
    eta_c: Option<f64>,
    eta_d: Option<f64>,
) -> CliResult<(f64, f64)> {
    match (alpha, eta_c, eta_d) {
        (None, ec, ed) => Ok((ec.unwrap_or(1.0), ed.unwrap_or(1.0))),
        (Some(a), None, None) => {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Failure::Config(format!("--alpha must lie in (0, 1], got {a}")));
            }
            let side = a.sqrt();
            Ok((side, side))
        }
        (Some(a), Some(ec), None) => Ok((ec, a / ec)),
        (Some(a), None, Some(ed)) => Ok((a / ed, ed)),
        (Some(a), Some(ec), Some(ed)) => {
            if (ec * ed - a).abs() > 1e-9 {
                return Err(Failure::Config(format!(
                    "--alpha {a} disagrees with --eta-c * --eta-d = {}",
                    ec * ed
                )));
            }
            Ok((ec, ed))
        }
    }
}

/// Dispatch rules selectable by name.
#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PolicyName {
    /// Discharge deficits first, store all surplus.
    MinGen,
    /// Keep the store as full as the generation cap allows.
    MinLolp,
    /// Hold the store between --sc and --sd.
    TwoThreshold,
    /// Generation-minimizing rule under binding rate caps.
    MinGenCapped,
    /// Loss-minimizing rule under binding rate caps.
    MinLolpCapped,
    /// Loss-suppressing rule that never draws charge from generation.
    SubLolp,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    system: SystemArgs,

    #[arg(long, value_enum)]
    policy: PolicyName,

    /// Charge threshold in MW (two-threshold only).
    #[arg(long)]
    sc: Option<f64>,

    /// Discharge threshold in MW (two-threshold only).
    #[arg(long)]
    sd: Option<f64>,

    /// Laplace location of the net-generation disturbance, MW.
    #[arg(long, default_value_t = 0.0)]
    laplace_mu: f64,

    /// Laplace scale of the net-generation disturbance, MW.
    #[arg(long)]
    laplace_scale: Option<f64>,

    /// Drive the run from a timestamp,value_mw CSV instead of the model.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["laplace_scale", "laplace_mu", "n", "seed"])]
    trace: Option<PathBuf>,

    /// Slots to sample.
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Initial storage in MW (default: full, or empty when unbounded).
    #[arg(long)]
    s1: Option<f64>,

    /// Summary JSON path.
    #[arg(long, default_value = "simulate.json")]
    out: PathBuf,

    /// Optional per-slot CSV of states and decisions.
    #[arg(long, value_name = "FILE")]
    slots_csv: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    system: SystemArgs,

    /// Laplace scale of the zero-mean disturbance, MW.
    #[arg(long)]
    laplace_scale: f64,

    #[arg(long, default_value = "analyze.json")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with a `timestamp,value_mw` header.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,

    /// Number of lagged values in the predictor.
    #[arg(long, default_value_t = 6)]
    lags: usize,

    /// Leading fraction of the series used for fitting; the rest yields residuals.
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,

    /// Residual location handling: fix at zero or use the sample median.
    #[arg(long, value_enum, default_value_t = LocationName::Zero)]
    location: LocationName,

    /// Resample the series to this step before fitting (mean aggregation).
    #[arg(long, value_name = "MINUTES")]
    resample_minutes: Option<u32>,

    #[arg(long, default_value = "fit.json")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LocationName {
    Zero,
    Median,
}

impl From<LocationName> for LocationMode {
    fn from(name: LocationName) -> LocationMode {
        match name {
            LocationName::Zero => LocationMode::Zero,
            LocationName::Median => LocationMode::Median,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Conventional generation capacity in MW, or "inf".
    #[arg(long, value_parser = parse_cap)]
    gmax: PowerCap,

    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long)]
    eta_c: Option<f64>,

    #[arg(long)]
    eta_d: Option<f64>,

    /// Swept quantity; storage capacity is the only supported axis.
    #[arg(long, default_value = "smax")]
    axis: String,

    /// Axis values: "start:stop:step" or a comma list, MW.
    #[arg(long)]
    values: String,

    /// Policy evaluated at every point.
    #[arg(long, value_enum, default_value_t = PolicyName::MinGen)]
    policy: PolicyName,

    /// Charge threshold as a fraction of each capacity (two-threshold only).
    #[arg(long)]
    fc: Option<f64>,

    /// Discharge threshold as a fraction of each capacity (two-threshold only).
    #[arg(long)]
    fd: Option<f64>,

    #[arg(long, default_value_t = 0.0)]
    laplace_mu: f64,

    #[arg(long)]
    laplace_scale: f64,

    /// Slots per point.
    #[arg(long, default_value_t = 200_000)]
    n: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Curve CSV path.
    #[arg(long, default_value = "sweep.csv")]
    csv: PathBuf,

    #[arg(long, default_value = "sweep.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ParetoArgs {
    #[command(flatten)]
    system: SystemArgs,

    /// Threshold fractions tried for both thresholds: range or comma list.
    #[arg(long, default_value = "0:1:0.25")]
    fractions: String,

    #[arg(long, default_value_t = 0.0)]
    laplace_mu: f64,

    #[arg(long)]
    laplace_scale: f64,

    /// Slots per threshold pair.
    #[arg(long, default_value_t = 200_000)]
    n: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value = "pareto.csv")]
    csv: PathBuf,

    #[arg(long, default_value = "pareto.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long)]
    eta_c: Option<f64>,

    #[arg(long)]
    eta_d: Option<f64>,

    /// Average-generation budget in MW.
    #[arg(long)]
    jg_target: f64,

    /// Loss-of-load probability budget.
    #[arg(long)]
    jl_target: f64,

    /// Generation capacities to size storage for: range or comma list, MW.
    #[arg(long)]
    gmax_values: String,

    /// Threshold fractions searched at every capacity.
    #[arg(long, default_value = "0:1:0.025")]
    fractions: String,

    /// Upper end of the storage search bracket, MW.
    #[arg(long, default_value_t = 200.0)]
    smax_hi: f64,

    /// Storage sizing resolution, MW.
    #[arg(long, default_value_t = 0.5)]
    smax_tol: f64,

    #[arg(long)]
    laplace_scale: f64,

    /// Slots per evaluation.
    #[arg(long, default_value_t = 600_000)]
    n: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value = "plan.csv")]
    csv: PathBuf,

    #[arg(long, default_value = "plan.json")]
    out: PathBuf,
}

#[derive(Args)]
struct DpArgs {
    #[command(flatten)]
    system: SystemArgs,

    /// Laplace scale of the zero-mean disturbance, MW.
    #[arg(long)]
    laplace_scale: f64,

    /// Weight on average generation.
    #[arg(long, default_value_t = 1.0)]
    rho1: f64,

    /// Weight on loss-of-load probability.
    #[arg(long, default_value_t = 0.0)]
    rho2: f64,

    /// Storage grid points.
    #[arg(long, default_value_t = 401)]
    ns: usize,

    /// Disturbance quantile bins.
    #[arg(long, default_value_t = 1001)]
    nd: usize,

    /// Span tolerance for value iteration.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,

    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,

    /// Optional CSV of the relative value function (s, v).
    #[arg(long, value_name = "FILE")]
    value_csv: Option<PathBuf>,

    /// Optional CSV of the optimal decision per (state, disturbance) cell.
    #[arg(long, value_name = "FILE")]
    policy_csv: Option<PathBuf>,

    #[arg(long, default_value = "dp.json")]
    out: PathBuf,
}

// ── flag parsing helpers ──

fn is_inf_token(text: &str) -> bool {
    matches!(text.trim().to_ascii_lowercase().as_str(), "inf" | "infinity" | "unbounded")
}

fn parse_cap(text: &str) -> Result<PowerCap, String> {
    if is_inf_token(text) {
        return Ok(PowerCap::Unbounded);
    }
    text.parse::<f64>().map(PowerCap::Bounded).map_err(|e| format!("{e} (or use \"inf\")"))
}

fn parse_inf_f64(text: &str) -> Result<f64, String> {
    if is_inf_token(text) {
        return Ok(f64::INFINITY);
    }
    text.parse::<f64>().map_err(|e| e.to_string())
}

/// Parses "start:stop:step" (inclusive) or a comma-separated list.
fn parse_value_list(text: &str) -> CliResult<Vec<f64>> {
    let bad = |msg: String| Failure::Config(format!("bad value list {text:?}: {msg}"));
    let num =
        |part: &str| part.trim().parse::<f64>().map_err(|e| bad(format!("{part:?}: {e}")));
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.len() {
        3 => {
            let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || !step.is_finite() {
                return Err(bad(format!("step must be positive, got {step}")));
            }
            if stop < start {
                return Err(bad(format!("stop {stop} is below start {start}")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|k| {
                    let v = start + k as f64 * step;
                    // land exactly on the endpoint despite rounding
                    if (v - stop).abs() < step * 1e-9 { stop } else { v }
                })
                .collect()
        }
        1 => text
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(num)
            .collect::<CliResult<Vec<f64>>>()?,
        _ => return Err(bad("expected start:stop:step or a comma list".to_string())),
    };
    if values.is_empty() {
        return Err(bad("no values given".to_string()));
    }
    Ok(values)
}

fn require_axis_values(values: &[f64]) -> CliResult<()> {
    if !values.windows(2).all(|w| w[0] < w[1]) {
        return Err(Failure::Config("axis values must be strictly increasing".to_string()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Failure::Config("axis values must be finite and >= 0".to_string()));
    }
    Ok(())
}

// ── config resolution ──

fn base_policy_kind(name: PolicyName) -> Option<PolicyKind> {
    match name {
        PolicyName::MinGen => Some(PolicyKind::MinGeneration),
        PolicyName::MinLolp => Some(PolicyKind::MinLolp),
        PolicyName::TwoThreshold => None,
        PolicyName::MinGenCapped => Some(PolicyKind::MinGenerationConstrained),
        PolicyName::MinLolpCapped => Some(PolicyKind::MinLolpConstrained),
        PolicyName::SubLolp => Some(PolicyKind::SuboptimalLolp),
    }
}

/// Pre-checks the regime a policy needs, so mismatches fail as config errors
/// instead of surfacing mid-run.
fn check_policy_supported(kind: PolicyKind, params: &SystemParams) -> CliResult<()> {
    let capped = matches!(
        kind,
        PolicyKind::MinGenerationConstrained | PolicyKind::MinLolpConstrained
    );
    if capped {
        if !params.rates_within_capacity() {
            return Err(Failure::Config(
                "rate caps exceed the single-slot capacity limits (needs cmax <= smax/eta_c and dmax <= eta_d*smax)"
                    .to_string(),
            ));
        }
    } else if !params.is_unconstrained_rates() {
        return Err(Failure::Config(
            "this policy assumes rate caps never bind; drop --cmax/--dmax or use a *-capped policy"
                .to_string(),
        ));
    }
    let needs_full_target = matches!(
        kind,
        PolicyKind::MinLolp
            | PolicyKind::MinLolpConstrained
            | PolicyKind::TwoThreshold(_)
            | PolicyKind::SuboptimalLolp
    );
    if needs_full_target && !params.s_max.is_finite() {
        return Err(Failure::Config(format!("policy {kind:?} needs a finite --smax")));
    }
    Ok(())
}

fn resolve_simulate(args: SimulateArgs) -> CliResult<RunConfig> {
    let params = args.system.resolve()?;
    if (args.sc.is_some() || args.sd.is_some()) && args.policy != PolicyName::TwoThreshold {
        return Err(Failure::Config("--sc/--sd apply only to --policy two-threshold".to_string()));
    }
    let policy = match base_policy_kind(args.policy) {
        Some(kind) => kind,
        None => {
            let (Some(sc), Some(sd)) = (args.sc, args.sd) else {
                return Err(Failure::Config(
                    "--policy two-threshold needs --sc and --sd".to_string(),
                ));
            };
            PolicyKind::TwoThreshold(ThresholdPair::new(sc, sd, params.s_max).or_config()?)
        }
    };
    check_policy_supported(policy, &params)?;
    let disturbance = match (args.trace, args.laplace_scale) {
        (Some(path), _) => DisturbanceSpec::Trace { path },
        (None, Some(b)) => DisturbanceSpec::Laplace { mu: args.laplace_mu, b },
        (None, None) => {
            return Err(Failure::Config(
                "give a disturbance model (--laplace-scale) or a --trace file".to_string(),
            ))
        }
    };
    let s1 = match args.s1 {
        Some(v) => v,
        None if params.s_max.is_finite() => params.s_max,
        None => 0.0,
    };
    if !(0.0..=params.s_max).contains(&s1) {
        return Err(Failure::Config(format!("--s1 must lie in [0, {}], got {s1}", params.s_max)));
    }
    Ok(RunConfig::Simulate {
        params,
        policy,
        disturbance,
        n: args.n,
        seed: args.seed,
        s1,
        out: args.out,
        slots_csv: args.slots_csv,
    })
}

fn resolve_analyze(args: AnalyzeArgs) -> CliResult<RunConfig> {
    let params = args.system.resolve()?;
    if !params.is_unconstrained_rates() {
        return Err(Failure::Config(
            "closed forms need capacity-level rate caps; drop --cmax/--dmax".to_string(),
        ));
    }
    Ok(RunConfig::Analyze { params, laplace_scale: args.laplace_scale, out: args.out })
}

fn resolve_fit(args: FitArgs) -> CliResult<RunConfig> {
    if !(args.train_frac > 0.0 && args.train_frac < 1.0) {
        return Err(Failure::Config(format!(
            "--train-frac must lie in (0, 1), got {}",
            args.train_frac
        )));
    }
    if args.lags == 0 {
        return Err(Failure::Config("--lags must be at least 1".to_string()));
    }
    Ok(RunConfig::Fit {
        input: args.input,
        lags: args.lags,
        train_frac: args.train_frac,
        location: args.location.into(),
        resample_minutes: args.resample_minutes,
        out: args.out,
    })
}

fn resolve_sweep(args: SweepArgs) -> CliResult<RunConfig> {
    if args.axis != "smax" {
        return Err(Failure::Config(format!(
            "unsupported --axis {:?}; storage capacity (\"smax\") is the only axis",
            args.axis
        )));
    }
    let (eta_c, eta_d) = resolve_etas(args.alpha, args.eta_c, args.eta_d)?;
    let values = parse_value_list(&args.values)?;
    require_axis_values(&values)?;
    let policy = match base_policy_kind(args.policy) {
        Some(kind) => {
            if args.fc.is_some() || args.fd.is_some() {
                return Err(Failure::Config(
                    "--fc/--fd apply only to --policy two-threshold".to_string(),
                ));
            }
            SweepPolicySpec::Fixed(kind)
        }
        None => {
            let (Some(f_c), Some(f_d)) = (args.fc, args.fd) else {
                return Err(Failure::Config(
                    "--policy two-threshold needs --fc and --fd threshold fractions".to_string(),
                ));
            };
            if !(0.0..=1.0).contains(&f_c) || !(0.0..=1.0).contains(&f_d) || f_c > f_d {
                return Err(Failure::Config(format!(
                    "threshold fractions need 0 <= fc <= fd <= 1, got ({f_c}, {f_d})"
                )));
            }
            SweepPolicySpec::Fractions { f_c, f_d }
        }
    };
    Ok(RunConfig::Sweep {
        g_max: args.gmax,
        eta_c,
        eta_d,
        policy,
        values,
        laplace_mu: args.laplace_mu,
        laplace_scale: args.laplace_scale,
        n: args.n,
        seed: args.seed,
        csv: args.csv,
        out: args.out,
    })
}

fn resolve_pareto(args: ParetoArgs) -> CliResult<RunConfig> {
    let params = args.system.resolve()?;
    if !params.s_max.is_finite() {
        return Err(Failure::Config("frontier evaluation needs a finite --smax".to_string()));
    }
    let fractions = parse_value_list(&args.fractions)?;
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Failure::Config("threshold fractions must lie in [0, 1]".to_string()));
    }
    Ok(RunConfig::Pareto {
        params,
        fractions,
        laplace_mu: args.laplace_mu,
        laplace_scale: args.laplace_scale,
        n: args.n,
        seed: args.seed,
        csv: args.csv,
        out: args.out,
    })
}

fn resolve_plan(args: PlanArgs) -> CliResult<RunConfig> {
    let (eta_c, eta_d) = resolve_etas(args.alpha, args.eta_c, args.eta_d)?;
    let gmax_values = parse_value_list(&args.gmax_values)?;
    require_axis_values(&gmax_values)?;
    let fractions = parse_value_list(&args.fractions)?;
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Failure::Config("threshold fractions must lie in [0, 1]".to_string()));
    }
    if !(args.smax_hi > 0.0 && args.smax_hi.is_finite()) {
        return Err(Failure::Config(format!("--smax-hi must be positive, got {}", args.smax_hi)));
    }
    if !(args.smax_tol > 0.0 && args.smax_tol.is_finite()) {
        return Err(Failure::Config(format!(
            "--smax-tol must be positive, got {}",
            args.smax_tol
        )));
    }
    Ok(RunConfig::Plan {
        eta_c,
        eta_d,
        jg_target: args.jg_target,
        jl_target: args.jl_target,
        gmax_values,
        fractions,
        smax_hi: args.smax_hi,
        smax_tol: args.smax_tol,
        laplace_scale: args.laplace_scale,
        n: args.n,
        seed: args.seed,
        csv: args.csv,
        out: args.out,
    })
}

fn resolve_dp(args: DpArgs) -> CliResult<RunConfig> {
    let params = args.system.resolve()?;
    if !params.s_max.is_finite() || params.s_max <= 0.0 {
        return Err(Failure::Config(
            "the dynamic program needs a finite positive --smax".to_string(),
        ));
    }
    Ok(RunConfig::Dp {
        params,
        laplace_scale: args.laplace_scale,
        rho1: args.rho1,
        rho2: args.rho2,
        n_s: args.ns,
        n_d: args.nd,
        tol: args.tol,
        max_iter: args.max_iter,
        value_csv: args.value_csv,
        policy_csv: args.policy_csv,
        out: args.out,
    })
}

fn resolve(command: Command) -> CliResult<RunConfig> {
    match command {
        Command::Simulate(args) => resolve_simulate(args),
        Command::Analyze(args) => resolve_analyze(args),
        Command::Fit(args) => resolve_fit(args),
        Command::Sweep(args) => resolve_sweep(args),
        Command::Pareto(args) => resolve_pareto(args),
        Command::Plan(args) => resolve_plan(args),
        Command::Dp(args) => resolve_dp(args),
    }
}

// ── entry point ──

fn init_threads(flag: Option<usize>) -> CliResult<()> {
    let count = match flag {
        Some(n) => Some(n),
        None => match std::env::var("STORESIM_THREADS") {
            Ok(text) => Some(text.trim().parse::<usize>().map_err(|_| {
                Failure::Config(format!("STORESIM_THREADS must be a thread count, got {text:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = count {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().or_config()?;
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    init_threads(cli.threads)?;
    let config = match (cli.config, cli.command) {
        (Some(path), None) => config::load_replay(&path)?,
        (None, Some(command)) => resolve(command)?,
        (Some(_), Some(_)) => {
            return Err(Failure::Config("give either --config or a command, not both".to_string()))
        }
        (None, None) => {
            return Err(Failure::Config(
                "nothing to do: give a command or --config (see --help)".to_string(),
            ))
        }
    };
    run::execute(&config, cli.stdout_json)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code: u8 = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
