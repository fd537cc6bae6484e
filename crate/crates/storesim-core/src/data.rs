//! Time-series ingestion and the disturbance-modelling pipeline: regular
//! sampled series on disk, net-generation construction, a lagged linear
//! predictor, residual extraction, Laplace fitting, and goodness of fit.
//!
//! CSV schema: header `timestamp,value_mw`, RFC3339 timestamps, UTF-8, LF.
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle reproduces every value bit for bit.

use crate::analytics::LaplaceModel;
use crate::model::Disturbance;
use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("gap in series: {0}")]
    GapError(String),
    #[error("schema mismatch: {0}")]
    UnitError(String),
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("insufficient data: need at least {needed} usable rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("series are not aligned: {0}")]
    MismatchedSeries(String),
    #[error("sample is empty")]
    EmptySample,
    #[error("invalid sample: {0}")]
    InvalidSample(String),
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io(io),
        other => DataError::ParseError { line, message: format!("{other:?}") },
    }
}

// ── time series ──

/// A gap-free, regularly sampled sequence of MW values.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub start_time: DateTime<Utc>,
    pub step: Duration,
    pub values: Vec<f64>,
    pub label: String,
}

impl TimeSeries {
    pub fn new(
        start_time: DateTime<Utc>,
        step: Duration,
        values: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<TimeSeries, DataError> {
        if step <= Duration::zero() {
            return Err(DataError::UnitError("sampling step must be positive".to_string()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(DataError::InvalidSample(format!("non-finite value {bad}")));
        }
        Ok(TimeSeries { start_time, step, values, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamp of sample `i`.
    pub fn time_at(&self, i: usize) -> DateTime<Utc> {
        self.start_time + self.step * i as i32
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.len() as f64
        }
    }
}

/// Ingestion options.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemaConfig {
    /// Resample to this step (mean aggregation) after loading.
    pub resample_minutes: Option<u32>,
    /// Label override; defaults to the file stem.
    pub label: Option<String>,
}

/// Loads a `timestamp,value_mw` CSV, validates that the timestamps form a
/// gap-free regular sequence, and optionally resamples.
pub fn load_timeseries(path: &Path, cfg: &SchemaConfig) -> Result<TimeSeries, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?;
    let header_fields: Vec<&str> = headers.iter().collect();
    if header_fields != ["timestamp", "value_mw"] {
        return Err(DataError::UnitError(format!(
            "expected header `timestamp,value_mw`, found `{}`",
            header_fields.join(",")
        )));
    }

    let mut times: Vec<DateTime<Utc>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(DataError::ParseError {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let ts = DateTime::parse_from_rfc3339(&record[0])
            .map_err(|e| DataError::ParseError { line, message: format!("bad timestamp: {e}") })?
            .with_timezone(&Utc);
        let value: f64 = record[1]
            .parse()
            .map_err(|e| DataError::ParseError { line, message: format!("bad value: {e}") })?;
        if !value.is_finite() {
            return Err(DataError::ParseError { line, message: format!("non-finite value {value}") });
        }
        times.push(ts);
        values.push(value);
    }
    if times.len() < 2 {
        return Err(DataError::UnitError(format!(
            "need at least two rows to establish the sampling step, got {}",
            times.len()
        )));
    }
    let step = times[1] - times[0];
    if step <= Duration::zero() {
        return Err(DataError::GapError(format!(
            "timestamps must be strictly increasing, got {} then {}",
            times[0], times[1]
        )));
    }
    for (i, &ts) in times.iter().enumerate() {
        let expected = times[0] + step * i as i32;
        if ts != expected {
            return Err(DataError::GapError(format!(
                "expected {} at row {}, found {}",
                expected.to_rfc3339_opts(SecondsFormat::Secs, true),
                i + 1,
                ts.to_rfc3339_opts(SecondsFormat::Secs, true)
            )));
        }
    }

    let label = cfg.label.clone().unwrap_or_else(|| {
        path.file_stem().map_or_else(|| "series".to_string(), |s| s.to_string_lossy().into_owned())
    });
    let series = TimeSeries::new(times[0], step, values, label)?;
    match cfg.resample_minutes {
        Some(minutes) => resample(&series, minutes),
        None => Ok(series),
    }
}

/// Writes a series in the on-disk schema. Loading the file back reproduces
/// the values exactly.
pub fn save_timeseries(series: &TimeSeries, path: &Path) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer.write_record(["timestamp", "value_mw"]).map_err(csv_error)?;
    for (i, v) in series.values.iter().enumerate() {
        writer
            .write_record([
                series.time_at(i).to_rfc3339_opts(SecondsFormat::Secs, true),
                format!("{v}"),
            ])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

/// Mean-aggregates to a coarser step; the target must be a whole multiple of
/// the source step, and a partial trailing block is dropped.
pub fn resample(series: &TimeSeries, minutes: u32) -> Result<TimeSeries, DataError> {
    let target = Duration::minutes(minutes as i64);
    if target < series.step || series.step <= Duration::zero() {
        return Err(DataError::UnitError(format!(
            "cannot resample a {}-second series to {} seconds",
            series.step.num_seconds(),
            target.num_seconds()
        )));
    }
    let src = series.step.num_seconds();
    let dst = target.num_seconds();
    if dst % src != 0 {
        return Err(DataError::UnitError(format!(
            "target step {dst}s is not a multiple of the source step {src}s"
        )));
    }
    let k = (dst / src) as usize;
    let values: Vec<f64> = series
        .values
        .chunks_exact(k)
        .map(|block| block.iter().sum::<f64>() / k as f64)
        .collect();
    if values.is_empty() {
        return Err(DataError::InsufficientData { needed: k, got: series.len() });
    }
    TimeSeries::new(series.start_time, target, values, series.label.clone())
}

/// Elementwise `wind - load`. Both series must share start, step, and length.
pub fn net_generation(wind: &TimeSeries, load: &TimeSeries) -> Result<TimeSeries, DataError> {
    if wind.step != load.step {
        return Err(DataError::MismatchedSeries(format!(
            "steps differ: {}s vs {}s",
            wind.step.num_seconds(),
            load.step.num_seconds()
        )));
    }
    if wind.start_time != load.start_time {
        return Err(DataError::MismatchedSeries(format!(
            "start times differ: {} vs {}",
            wind.start_time, load.start_time
        )));
    }
    if wind.len() != load.len() {
        return Err(DataError::MismatchedSeries(format!(
            "lengths differ: {} vs {}; trim to a common span first",
            wind.len(),
            load.len()
        )));
    }
    let values = wind.values.iter().zip(&load.values).map(|(w, l)| w - l).collect();
    TimeSeries::new(wind.start_time, wind.step, values, "net generation")
}

// ── linear predictor ──

/// Least-squares predictor of `x_t` from the previous `lags` samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorModel {
    pub lags: usize,
    /// Weight of `x_{t-1}`, then `x_{t-2}`, and so on.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub train_range: Range<usize>,
}

impl PredictorModel {
    /// One-step-ahead prediction at index `t` (requires `t >= lags`).
    pub fn predict_at(&self, series: &TimeSeries, t: usize) -> f64 {
        let mut y = self.intercept;
        for (k, &beta) in self.coefficients.iter().enumerate() {
            y += beta * series.values[t - 1 - k];
        }
        y
    }
}

/// Solves `A x = b` for a symmetric positive-definite `A` (row-major) by
/// Cholesky factorization. The systems here are tiny (lags + 1 unknowns).
/// A pivot that collapses by a factor of 1e12 relative to its original
/// diagonal marks a numerically dependent column (rank-revealing test), not
/// rounding noise.
fn solve_spd(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), DataError> {
    const REL_PIVOT_TOL: f64 = 1e-12;
    let scale: Vec<f64> = (0..n).map(|j| a[j * n + j]).collect();
    // in-place lower-triangular factor
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !diag.is_finite() || diag <= scale[j] * REL_PIVOT_TOL {
            return Err(DataError::SingularDesign(format!(
                "normal equations lost positive definiteness at pivot {j}"
            )));
        }
        let diag = diag.sqrt();
        a[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / diag;
        }
    }
    // forward then back substitution
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= a[k * n + i] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    Ok(())
}

/// Ordinary least squares of `x_t` on `(x_{t-1}, ..., x_{t-lags})` plus an
/// intercept, over the training indices. A rank-deficient design (for
/// example a constant series, whose lag columns replicate the intercept) is
/// reported as `SingularDesign`.
pub fn fit_predictor(
    series: &TimeSeries,
    lags: usize,
    train_range: Range<usize>,
) -> Result<PredictorModel, DataError> {
    if lags < 1 {
        return Err(DataError::InvalidSample("predictor needs at least one lag".to_string()));
    }
    if train_range.end > series.len() {
        return Err(DataError::InsufficientData { needed: train_range.end, got: series.len() });
    }
    let rows: Vec<usize> = train_range.clone().filter(|&t| t >= lags).collect();
    if rows.len() < lags + 2 {
        return Err(DataError::InsufficientData { needed: lags + 2, got: rows.len() });
    }

    let n = lags + 1; // intercept first, then the lag weights
    let mut a = vec![0.0f64; n * n];
    let mut b = vec![0.0f64; n];
    let x = |t: usize, j: usize| if j == 0 { 1.0 } else { series.values[t - j] };
    for &t in &rows {
        let y = series.values[t];
        for i in 0..n {
            b[i] += x(t, i) * y;
            for j in i..n {
                a[i * n + j] += x(t, i) * x(t, j);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = a[j * n + i];
        }
    }
    solve_spd(&mut a, &mut b, n)?;
    Ok(PredictorModel {
        lags,
        coefficients: b[1..].to_vec(),
        intercept: b[0],
        train_range,
    })
}

/// Prediction errors `actual - predicted` over `eval_range`, as a series
/// aligned to the evaluated indices.
pub fn residuals(
    model: &PredictorModel,
    series: &TimeSeries,
    eval_range: Range<usize>,
) -> Result<TimeSeries, DataError> {
    if eval_range.start < model.lags {
        return Err(DataError::InsufficientData { needed: model.lags, got: eval_range.start });
    }
    if eval_range.end > series.len() {
        return Err(DataError::InsufficientData { needed: eval_range.end, got: series.len() });
    }
    let values: Vec<f64> =
        eval_range.clone().map(|t| series.values[t] - model.predict_at(series, t)).collect();
    TimeSeries::new(
        series.start_time + series.step * eval_range.start as i32,
        series.step,
        values,
        format!("{} residuals", series.label),
    )
}

// ── distribution fitting ──

/// Location handling for the Laplace fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocationMode {
    /// Fix the location at zero (the disturbance model is zero-mean).
    #[default]
    Zero,
    /// Use the sample median (the maximum-likelihood location).
    Median,
}

/// Maximum-likelihood Laplace scale given the location:
/// `b = mean |x - location|`.
pub fn fit_laplace(samples: &[f64], mode: LocationMode) -> Result<LaplaceModel, DataError> {
    if samples.len() < 2 {
        return Err(DataError::InsufficientData { needed: 2, got: samples.len() });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(DataError::InvalidSample("non-finite sample value".to_string()));
    }
    let location = match mode {
        LocationMode::Zero => 0.0,
        LocationMode::Median => {
            let mut sorted = samples.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            }
        }
    };
    let b = samples.iter().map(|x| (x - location).abs()).sum::<f64>() / samples.len() as f64;
    if !(b > 0.0) {
        return Err(DataError::SingularDesign(
            "samples have zero dispersion about the location".to_string(),
        ));
    }
    LaplaceModel::new(location, b)
        .map_err(|e| DataError::InvalidSample(format!("fitted model rejected: {e}")))
}

/// Two-sided Kolmogorov-Smirnov statistic between a sample and a reference
/// distribution. Both one-sided limits of the reference cdf are evaluated so
/// point masses are handled correctly.
pub fn ks_distance(sample: &[f64], dist: &dyn Disturbance) -> Result<f64, DataError> {
    if sample.is_empty() {
        return Err(DataError::EmptySample);
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(DataError::InvalidSample("non-finite sample value".to_string()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    // tied samples form one jump of the empirical cdf, so each distinct value
    // is compared once with the group's full span
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        d = d.max((j as f64 / n - dist.cdf(x)).abs());
        d = d.max((dist.cdf_left(x) - i as f64 / n).abs());
        i = j;
    }
    Ok(d)
}

// ── empirical distribution ──

/// Empirical distribution of a sample, usable anywhere a disturbance model is
/// expected (sampling, smoothing, grid construction).
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    /// prefix[i] = sum of the first i sorted values.
    prefix: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_samples(samples: &[f64]) -> Result<EmpiricalCdf, DataError> {
        if samples.is_empty() {
            return Err(DataError::EmptySample);
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidSample("non-finite sample value".to_string()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for &x in &sorted {
            acc += x;
            prefix.push(acc);
        }
        Ok(EmpiricalCdf { sorted, prefix })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

impl Disturbance for EmpiricalCdf {
    fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v < x) as f64 / self.len() as f64
    }

    fn quantile(&self, u: f64) -> f64 {
        let n = self.len();
        let idx = ((u * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.sorted[idx]
    }

    fn pdf(&self, _x: f64) -> Option<f64> {
        None
    }

    fn partial_mean(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        let lo = self.sorted.partition_point(|&v| v <= a);
        let hi = self.sorted.partition_point(|&v| v <= b);
        (self.prefix[hi] - self.prefix[lo]) / self.len() as f64
    }
}
