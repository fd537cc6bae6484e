//! End-to-end exercise of the data layer: synthetic wind and load series go
//! through CSV round-trips, net-generation construction, predictor fitting,
//! residual extraction, and distribution fitting, and the fitted artifacts
//! plug back into the simulation and grid machinery.

use chrono::{Duration, TimeZone, Utc};
use storesim_core::analytics::LaplaceModel;
use storesim_core::data::{
    fit_laplace, fit_predictor, ks_distance, load_timeseries, net_generation, residuals,
    save_timeseries, EmpiricalCdf, LocationMode, SchemaConfig, TimeSeries,
};
use storesim_core::dp::Grid;
use storesim_core::model::{Disturbance, PowerCap, SystemParams};
use storesim_core::sim::sample_iid;

const WIND_MEAN: f64 = 25624.0;
const LOAD_MEAN: f64 = 27232.0;
const INNOVATION_SCALE: f64 = 14.0;

/// Pin the sample mean exactly by shifting; keeps the anchor assertions sharp.
fn recenter(values: &mut [f64], mean: f64) {
    let shift = mean - values.iter().sum::<f64>() / values.len() as f64;
    for v in values {
        *v += shift;
    }
}

fn series(values: Vec<f64>, label: &str) -> TimeSeries {
    let start = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    TimeSeries::new(start, Duration::minutes(10), values, label).unwrap()
}

#[test]
fn a_full_pipeline_turns_raw_csv_into_a_fitted_disturbance_model() {
    let n = 20_000;

    // wind: first-order autoregression around its mean, Laplace innovations
    let innovations = sample_iid(&LaplaceModel::standard(INNOVATION_SCALE).unwrap(), n, 21)
        .unwrap()
        .deltas;
    let mut wind_values = Vec::with_capacity(n);
    let mut x = WIND_MEAN;
    for &e in &innovations {
        x = WIND_MEAN + 0.9 * (x - WIND_MEAN) + e;
        wind_values.push(x);
    }
    recenter(&mut wind_values, WIND_MEAN);

    // load: smooth daily swing, no noise
    let mut load_values: Vec<f64> = (0..n)
        .map(|t| LOAD_MEAN + 500.0 * (2.0 * std::f64::consts::PI * t as f64 / 144.0).sin())
        .collect();
    recenter(&mut load_values, LOAD_MEAN);

    // through the CSV layer and back
    let dir = tempfile::tempdir().unwrap();
    let wind_path = dir.path().join("wind.csv");
    let load_path = dir.path().join("load.csv");
    save_timeseries(&series(wind_values, "wind"), &wind_path).unwrap();
    save_timeseries(&series(load_values, "load"), &load_path).unwrap();
    let cfg = SchemaConfig::default();
    let wind = load_timeseries(&wind_path, &cfg).unwrap();
    let load = load_timeseries(&load_path, &cfg).unwrap();

    let net = net_generation(&wind, &load).unwrap();
    assert!(
        (net.mean() - (WIND_MEAN - LOAD_MEAN)).abs() < 1e-9 * LOAD_MEAN,
        "net mean {} should be {}",
        net.mean(),
        WIND_MEAN - LOAD_MEAN
    );

    // an hour of history explains the wind up to its innovation; the load
    // swing is deterministic, so prediction error lives in the wind alone
    let model = fit_predictor(&wind, 6, 0..n / 2).unwrap();
    let res = residuals(&model, &wind, n / 2..n).unwrap();
    assert!(res.mean().abs() < 0.5, "residual mean {} not near zero", res.mean());
    let mad = res.values.iter().map(|v| v.abs()).sum::<f64>() / res.len() as f64;
    assert!(
        (mad - INNOVATION_SCALE).abs() < 0.05 * INNOVATION_SCALE,
        "residual scale {mad} far from the innovation scale"
    );

    let fitted = fit_laplace(&res.values, LocationMode::Zero).unwrap();
    assert_eq!(fitted.mu, 0.0);
    assert!((fitted.b - INNOVATION_SCALE).abs() < 0.05 * INNOVATION_SCALE);
    let ks = ks_distance(&res.values, &fitted).unwrap();
    assert!(ks < 0.025, "fitted model rejected by its own residuals: ks = {ks}");

    // the empirical residual law is a drop-in disturbance model
    let emp = EmpiricalCdf::from_samples(&res.values).unwrap();
    let emp_mean = emp.partial_mean(f64::NEG_INFINITY, f64::INFINITY);

    let p = SystemParams::unconstrained(PowerCap::Bounded(160.0), 100.0, 0.9, 0.9).unwrap();
    let grid = Grid::regular(&p, &emp, 11, 64).unwrap();
    let grid_mean: f64 = grid.d_values.iter().map(|&(v, pr)| v * pr).sum();
    assert!(
        (grid_mean - emp_mean).abs() < 1e-9 * (1.0 + emp_mean.abs()),
        "quantile bins lost the first moment: {grid_mean} vs {emp_mean}"
    );

    let resampled = sample_iid(&emp, 50_000, 9).unwrap();
    let sample_mean = resampled.deltas.iter().sum::<f64>() / resampled.len() as f64;
    let sigma = (INNOVATION_SCALE * INNOVATION_SCALE * 2.0 / 50_000.0).sqrt();
    assert!(
        (sample_mean - emp_mean).abs() < 4.0 * sigma,
        "redrawn mean {sample_mean} far from the empirical mean {emp_mean}"
    );
}

/// The fitted scale must be the minimizer of the Laplace negative
/// log-likelihood in the scale, not just a plug-in formula: a golden-section
/// scan over a wide bracket has to land on it.
#[test]
fn the_fitted_scale_minimizes_the_likelihood_objective() {
    let sample = sample_iid(&LaplaceModel::standard(14.0).unwrap(), 4_000, 17).unwrap().deltas;
    let fitted = fit_laplace(&sample, LocationMode::Zero).unwrap();

    let nll = |b: f64| {
        sample.len() as f64 * (2.0 * b).ln() + sample.iter().map(|x| x.abs()).sum::<f64>() / b
    };
    let (mut lo, mut hi) = (fitted.b * 0.1, fitted.b * 10.0);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut m1, mut m2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
    let (mut f1, mut f2) = (nll(m1), nll(m2));
    while hi - lo > 1e-8 {
        if f1 <= f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - phi * (hi - lo);
            f1 = nll(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + phi * (hi - lo);
            f2 = nll(m2);
        }
    }
    let argmin = 0.5 * (lo + hi);
    assert!(
        (argmin - fitted.b).abs() < 1e-6 * (1.0 + fitted.b),
        "golden-section minimum {argmin} disagrees with the fitted scale {}",
        fitted.b
    );
}
