//! End-to-end tests of the binary: exit codes, the summary envelope,
//! bit-exact replay from emitted configs, and the documented reference
//! behaviors of each command.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storesim"))
        .current_dir(dir)
        .env_remove("STORESIM_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path, name: &str) -> Value {
    let text = fs::read_to_string(dir.join(name)).expect("summary exists");
    serde_json::from_str(&text).expect("summary parses")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a gap-free 10-minute series CSV starting 2025-01-01.
fn write_series(path: &Path, values: &[f64]) {
    let mut text = String::from("timestamp,value_mw\n");
    for (i, v) in values.iter().enumerate() {
        let minutes = 10 * i as u64;
        let (day, rem) = (minutes / 1440, minutes % 1440);
        assert!(day < 31, "helper only covers January");
        text.push_str(&format!(
            "2025-01-{:02}T{:02}:{:02}:00Z,{v}\n",
            1 + day,
            rem / 60,
            rem % 60
        ));
    }
    fs::write(path, text).unwrap();
}

/// Deterministic noise without pulling in an RNG dependency.
fn lcg_noise(state: &mut u64) -> f64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 20.0
}

#[test]
fn summary_envelope_and_bit_exact_replay() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--policy",
        "min-gen",
        "--laplace-scale",
        "13.99",
        "--gmax",
        "160",
        "--alpha",
        "0.6",
        "--smax",
        "50",
        "--n",
        "20000",
        "--seed",
        "9",
        "--out",
        "sim.json",
        "--slots-csv",
        "slots.csv",
    ];
    let out = run_in(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let doc = summary(dir.path(), "sim.json");
    assert_eq!(doc["tool"], "storesim");
    assert_eq!(doc["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["seed"], 9);
    let hash = doc["config_hash"].as_str().unwrap();
    assert!(hash.starts_with("fnv1a64:") && hash.len() == 24, "{hash}");
    assert!(doc["results"]["j_g"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["config"]["command"], "simulate");

    // the CSV carries the same provenance stamp
    let csv = fs::read_to_string(dir.path().join("slots.csv")).unwrap();
    assert!(csv.starts_with("# tool: storesim"));
    assert!(csv.contains(&format!("# config_hash: {hash}")));
    assert!(csv.contains("# seed: 9"));
    assert!(csv.contains("slot,delta,s,g,c,d,next_s,lost_load,curtailed"));

    // replaying the emitted summary reproduces both artifacts byte for byte
    let first_json = fs::read(dir.path().join("sim.json")).unwrap();
    let first_csv = fs::read(dir.path().join("slots.csv")).unwrap();
    fs::copy(dir.path().join("sim.json"), dir.path().join("saved.json")).unwrap();
    fs::remove_file(dir.path().join("sim.json")).unwrap();
    fs::remove_file(dir.path().join("slots.csv")).unwrap();
    let out = run_in(dir.path(), &["--config", "saved.json"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(fs::read(dir.path().join("sim.json")).unwrap(), first_json);
    assert_eq!(fs::read(dir.path().join("slots.csv")).unwrap(), first_csv);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    // config errors exit 1
    let bad_thresholds = run_in(
        dir.path(),
        &[
            "simulate", "--policy", "two-threshold", "--sc", "80", "--sd", "20", "--gmax",
            "160", "--smax", "100", "--laplace-scale", "14", "--n", "10", "--out", "x.json",
        ],
    );
    assert_eq!(bad_thresholds.status.code(), Some(1));
    assert!(stderr_of(&bad_thresholds).contains("thresholds"));

    let missing_trace = run_in(
        dir.path(),
        &[
            "simulate", "--policy", "min-gen", "--gmax", "160", "--smax", "50", "--trace",
            "nope.csv", "--out", "x.json",
        ],
    );
    assert_eq!(missing_trace.status.code(), Some(1));
    assert!(stderr_of(&missing_trace).contains("nope.csv"));

    let missing_input =
        run_in(dir.path(), &["fit", "--input", "nope.csv", "--out", "x.json"]);
    assert_eq!(missing_input.status.code(), Some(1));

    let unknown_flag = run_in(dir.path(), &["analyze", "--no-such-flag"]);
    assert_eq!(unknown_flag.status.code(), Some(1));

    let bare = run_in(dir.path(), &[]);
    assert_eq!(bare.status.code(), Some(1));

    let both = run_in(
        dir.path(),
        &["--config", "saved.json", "analyze", "--gmax", "1", "--smax", "0", "--laplace-scale", "1"],
    );
    assert_eq!(both.status.code(), Some(1));

    let infinite_target = run_in(
        dir.path(),
        &[
            "simulate", "--policy", "min-lolp", "--gmax", "160", "--smax", "inf",
            "--laplace-scale", "14", "--n", "10", "--out", "x.json",
        ],
    );
    assert_eq!(infinite_target.status.code(), Some(1));

    let bad_threads = Command::new(env!("CARGO_BIN_EXE_storesim"))
        .current_dir(dir.path())
        .env("STORESIM_THREADS", "lots")
        .args(["analyze", "--gmax", "160", "--smax", "0", "--laplace-scale", "14"])
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));

    // help and version exit 0
    assert_eq!(run_in(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run_in(dir.path(), &["--version"]).status.code(), Some(0));

    // a degenerate fit input is a processing failure: exit 2
    write_series(&dir.path().join("const.csv"), &[5.0; 60]);
    let constant = run_in(
        dir.path(),
        &["fit", "--input", "const.csv", "--out", "fit.json"],
    );
    assert_eq!(constant.status.code(), Some(2));
    assert!(stderr_of(&constant).contains("singular design"));
}

#[test]
fn analyze_matches_the_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "analyze", "--gmax", "160", "--alpha", "0.6", "--laplace-scale", "13.99",
    ];

    // no storage: generation absorbs the full negative part of the disturbance
    let mut args = base.to_vec();
    args.extend(["--smax", "0", "--out", "a0.json"]);
    assert!(run_in(dir.path(), &args).status.success());
    let doc = summary(dir.path(), "a0.json");
    let j_g = doc["results"]["j_g"].as_f64().unwrap();
    assert!((j_g - 6.994924512608891).abs() < 1e-9 * j_g, "{j_g}");
    assert!(doc["seed"].is_null());

    // unbounded storage: the cost sits at its asymptote and stops improving
    let mut args = base.to_vec();
    args.extend(["--smax", "inf", "--out", "ainf.json"]);
    assert!(run_in(dir.path(), &args).status.success());
    let doc = summary(dir.path(), "ainf.json");
    let r = &doc["results"];
    let asymptote = r["j_g_asymptotic"].as_f64().unwrap();
    assert!((asymptote - 0.4 * 13.99 / 2.0).abs() < 1e-12, "{asymptote}");
    let j_g = r["j_g"].as_f64().unwrap();
    assert!((j_g - asymptote).abs() < 5e-5, "{j_g} vs {asymptote}");
    assert_eq!(r["j_g_derivative_smax"].as_f64().unwrap(), 0.0);
    assert!(r["rate_bounds"]["gamma_max"].as_f64().unwrap() < 0.0);
    assert_eq!(doc["config"]["params"]["s_max"], "inf");

    // identical flags hash identically; different flags differently
    let mut args = base.to_vec();
    args.extend(["--smax", "0", "--out", "a0b.json"]);
    assert!(run_in(dir.path(), &args).status.success());
    let again = summary(dir.path(), "a0b.json");
    let reference = summary(dir.path(), "a0.json");
    assert_ne!(reference["config_hash"], again["config_hash"]); // out path differs
    assert_eq!(reference["results"], again["results"]);

    // a generation cap too small for the decay-rate window is reported, not fatal
    let weak = run_in(
        dir.path(),
        &[
            "analyze", "--gmax", "5", "--alpha", "0.6", "--smax", "50", "--laplace-scale",
            "13.99", "--out", "weak.json",
        ],
    );
    assert!(weak.status.success());
    let doc = summary(dir.path(), "weak.json");
    assert_eq!(doc["results"]["rate_bounds"], "condition violated");
}

#[test]
fn sweep_emits_a_monotone_curve_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--gmax", "160", "--alpha", "0.6", "--axis", "smax", "--values", "0:100:25",
        "--laplace-scale", "13.99", "--n", "60000", "--seed", "1", "--csv", "sweep.csv",
        "--out", "sweep.json",
    ];
    let out = run_in(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# tool: storesim"));
    assert!(lines[1].starts_with("# config_hash: fnv1a64:"));
    assert_eq!(lines[2], "# seed: 1");
    assert_eq!(lines[3], "smax,j_g,j_l_event,j_l_smoothed,curtailed_avg,s_c,s_d");
    let rows: Vec<Vec<&str>> = lines[4..].iter().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[4][0], "100");
    // adding storage never buys more generation (small slack for per-point
    // Monte Carlo noise on independent streams)
    let j_g: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    for pair in j_g.windows(2) {
        assert!(pair[1] <= pair[0] + 0.05, "{j_g:?}");
    }

    // the emitted config replays the CSV byte for byte
    let first = fs::read(dir.path().join("sweep.csv")).unwrap();
    fs::remove_file(dir.path().join("sweep.csv")).unwrap();
    let out = run_in(dir.path(), &["--config", "sweep.json"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(fs::read(dir.path().join("sweep.csv")).unwrap(), first);
}

#[test]
fn dp_generation_only_recovers_the_drain_first_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "dp", "--gmax", "160", "--alpha", "0.6", "--smax", "100", "--laplace-scale", "13.99",
        "--rho1", "1", "--rho2", "0", "--ns", "41", "--nd", "101", "--tol", "1e-7", "--out",
        "dp.json", "--value-csv", "v.csv",
    ];
    let out = run_in(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let doc = summary(dir.path(), "dp.json");
    let r = &doc["results"];
    assert_eq!(r["thresholds"]["s_c"].as_f64().unwrap(), 0.0);
    assert_eq!(r["thresholds"]["s_d"].as_f64().unwrap(), 0.0);
    assert_eq!(r["two_threshold"], true);
    assert!(doc["seed"].is_null());
    let v_csv = fs::read_to_string(dir.path().join("v.csv")).unwrap();
    assert_eq!(v_csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 41);
}

#[test]
fn trace_driven_simulation_reads_the_series_schema() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 5.0 } else { -5.0 }).collect();
    write_series(&dir.path().join("net.csv"), &values);
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--policy", "min-gen", "--gmax", "160", "--alpha", "0.6", "--smax",
            "50", "--trace", "net.csv", "--s1", "0", "--out", "run.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let doc = summary(dir.path(), "run.json");
    assert_eq!(doc["results"]["n"], 40);
    assert!(doc["seed"].is_null());
    assert!(doc["results"]["j_l_smoothed"].is_null());
    // +5 is stored, -5 is then served from storage at round-trip 0.6: the
    // net draw on generation is 5*(1 - 0.6) every second slot
    let j_g = doc["results"]["j_g"].as_f64().unwrap();
    assert!((j_g - 0.5 * 5.0 * 0.4).abs() < 1e-9, "{j_g}");
}

#[test]
fn fit_reports_the_model_and_residual_distance() {
    let dir = tempfile::tempdir().unwrap();
    let mut state = 12345u64;
    let mut values = vec![0.0f64];
    for _ in 0..1200 {
        let prev = *values.last().unwrap();
        values.push(0.8 * prev + lcg_noise(&mut state));
    }
    write_series(&dir.path().join("series.csv"), &values);
    let out = run_in(
        dir.path(),
        &["fit", "--input", "series.csv", "--lags", "6", "--out", "fit.json"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let doc = summary(dir.path(), "fit.json");
    let r = &doc["results"];
    assert_eq!(r["predictor"]["lags"], 6);
    assert_eq!(r["predictor"]["coefficients"].as_array().unwrap().len(), 6);
    let lead = r["predictor"]["coefficients"][0].as_f64().unwrap();
    assert!((lead - 0.8).abs() < 0.1, "{lead}");
    assert!(r["laplace"]["b"].as_f64().unwrap() > 0.0);
    assert!(r["ks_distance"].as_f64().unwrap() < 0.5);
    assert!(doc["seed"].is_null());
}
