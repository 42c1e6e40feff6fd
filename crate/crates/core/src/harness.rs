//! Experiment plumbing: carbon traces, instance construction from traces,
//! batch runs and competitive-ratio reports.
//!
//! Costs are expressed in carbon units. A job of length `J` runs at
//! throughput `1/J` and one full slot at point `u` costs `carbon_u(t) / J`,
//! so the normalized cost `f/c` is the carbon intensity itself.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    adversary_skeleton, apply_volatility, floyd_warshall, generate_y_adversary, make_adversarial_advice,
    make_advice_from_forecast, noisy_forecast, AdversaryParams, Family,
};
use crate::algorithms::{run_pcm, run_pcm_tv, run_stclip, run_stclip_tv, Advice, Pcm};
use crate::baselines::{run_carbon_agnostic, run_delayed_greedy, run_greedy, run_simple_threshold, solve_offline_optimal};
use crate::error::{Result, SoadError};
use crate::model::{validate, Instance, MetricSpace, RunResult};
use crate::numerics::solve_eta;

const TRACE_HEADER: [&str; 3] = ["timestamp_utc", "region", "carbon_gco2_kwh"];

/// Hourly carbon intensity per region on a common time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonTrace {
    pub regions: Vec<String>,
    pub times: Vec<DateTime<Utc>>,
    /// `values[r][h]`, gCO2eq/kWh.
    pub values: Vec<Vec<f64>>,
    /// Cells absent from the source, filled from the nearest earlier hour
    /// (or the first later one).
    pub gaps: Vec<(String, DateTime<Utc>)>,
}

impl CarbonTrace {
    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn hours(&self) -> usize {
        self.times.len()
    }

    fn check(&self) -> Result<()> {
        if self.regions.is_empty() || self.times.is_empty() {
            return Err(SoadError::Trace("empty trace".into()));
        }
        for (r, row) in self.values.iter().enumerate() {
            if row.len() != self.times.len() {
                return Err(SoadError::Trace(format!("region {} has {} values for {} hours", self.regions[r], row.len(), self.times.len())));
            }
            if let Some(x) = row.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
                return Err(SoadError::Trace(format!("region {} has non-positive intensity {x}", self.regions[r])));
            }
        }
        Ok(())
    }

    /// Median over every cell.
    pub fn median(&self) -> f64 {
        let mut all: Vec<f64> = self.values.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        let m = all.len();
        if m % 2 == 1 {
            all[m / 2]
        } else {
            0.5 * (all[m / 2 - 1] + all[m / 2])
        }
    }
}

fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| Utc.from_utc_datetime(&n))
}

pub fn ingest_trace(path: impl AsRef<Path>) -> Result<CarbonTrace> {
    let file = std::fs::File::open(path.as_ref())?;
    read_trace(file)
}

/// Parses `timestamp_utc,region,carbon_gco2_kwh` rows.
pub fn read_trace(reader: impl Read) -> Result<CarbonTrace> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(SoadError::Trace(format!("line 1: expected header {}", TRACE_HEADER.join(","))));
    }
    let mut series: BTreeMap<String, Vec<(DateTime<Utc>, f64)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut seen: HashSet<(String, DateTime<Utc>)> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |msg: &str| SoadError::Trace(format!("line {line}: {msg}"));
        if rec.len() != 3 {
            return Err(err(if rec.len() < 3 { "missing region" } else { "too many fields" }));
        }
        let time = parse_time(&rec[0]).ok_or_else(|| err(&format!("bad timestamp {:?}", &rec[0])))?;
        let region = rec[1].to_string();
        if region.is_empty() {
            return Err(err("missing region"));
        }
        let value: f64 = rec[2].parse().map_err(|_| err(&format!("bad intensity {:?}", &rec[2])))?;
        if value < 0.0 {
            return Err(err(&format!("negative intensity {value}")));
        }
        if !(value > 0.0) || !value.is_finite() {
            return Err(err(&format!("intensity must be positive, got {value}")));
        }
        if !seen.insert((region.clone(), time)) {
            return Err(err(&format!("duplicate (region,time) ({region}, {})", fmt_time(&time))));
        }
        let s = series.entry(region.clone()).or_insert_with(|| {
            order.push(region.clone());
            Vec::new()
        });
        if let Some(&(last, _)) = s.last() {
            if time < last {
                return Err(err(&format!("timestamps not sorted for region {region}")));
            }
        }
        s.push((time, value));
    }
    if order.is_empty() {
        return Err(SoadError::Trace("no data rows".into()));
    }
    let t0 = series.values().map(|s| s[0].0).min().unwrap_or_default();
    let t1 = series.values().map(|s| s[s.len() - 1].0).max().unwrap_or_default();
    for (r, s) in &series {
        if let Some(&(t, _)) = s.iter().find(|(t, _)| (*t - t0).num_seconds() % 3600 != 0) {
            return Err(SoadError::Trace(format!("region {r}: {} is off the hourly grid", fmt_time(&t))));
        }
    }
    let hours = ((t1 - t0).num_hours() + 1) as usize;
    let times: Vec<DateTime<Utc>> = (0..hours).map(|h| t0 + Duration::hours(h as i64)).collect();
    let mut values = Vec::with_capacity(order.len());
    let mut gaps = Vec::new();
    for r in &order {
        let mut row: Vec<Option<f64>> = vec![None; hours];
        for &(t, v) in &series[r] {
            row[(t - t0).num_hours() as usize] = Some(v);
        }
        let first = row.iter().flatten().next().copied().unwrap_or(1.0);
        let mut last = first;
        let mut filled = Vec::with_capacity(hours);
        for (h, x) in row.into_iter().enumerate() {
            match x {
                Some(v) => last = v,
                None => gaps.push((r.clone(), times[h])),
            }
            filled.push(last);
        }
        values.push(filled);
    }
    let trace = CarbonTrace { regions: order, times, values, gaps };
    trace.check()?;
    Ok(trace)
}

fn fmt_time(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn write_trace(trace: &CarbonTrace, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for (h, t) in trace.times.iter().enumerate() {
        for (r, name) in trace.regions.iter().enumerate() {
            w.write_record([fmt_time(t), name.clone(), trace.values[r][h].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// No region stays consistently cleanest.
    Mixed,
    /// About half of the regions sit well below the rest at all times.
    LowCarbonHeavy,
    /// Wide swings and spikes everywhere.
    Volatile,
}

impl std::str::FromStr for Profile {
    type Err = SoadError;
    fn from_str(s: &str) -> Result<Profile> {
        match s {
            "mixed" => Ok(Profile::Mixed),
            "low-carbon-heavy" => Ok(Profile::LowCarbonHeavy),
            "volatile" => Ok(Profile::Volatile),
            _ => Err(SoadError::Domain(format!("unknown profile {s}"))),
        }
    }
}

/// Default intensity range of synthetic traces.
pub const SYNTH_RANGE: (f64, f64) = (20.0, 800.0);

pub fn synthesize_trace(n: usize, hours: usize, seed: u64, profile: Profile) -> Result<CarbonTrace> {
    synthesize_trace_in(n, hours, seed, profile, SYNTH_RANGE.0, SYNTH_RANGE.1)
}

/// Diurnal sinusoid plus region offset plus noise, clamped to `[lo, hi]`.
/// Shapes are fractions of the range.
pub fn synthesize_trace_in(n: usize, hours: usize, seed: u64, profile: Profile, lo: f64, hi: f64) -> Result<CarbonTrace> {
    if n == 0 || hours == 0 || !(lo > 0.0 && hi > lo) {
        return Err(SoadError::Domain(format!("need n, hours > 0 and 0 < lo < hi; got {n}, {hours}, [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = hi - lo;
    let n_low = (n / 2).max(1);
    let t0 = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).single().unwrap_or_default();
    let times: Vec<DateTime<Utc>> = (0..hours).map(|h| t0 + Duration::hours(h as i64)).collect();
    let mut values = Vec::with_capacity(n);
    for r in 0..n {
        // (base, diurnal amplitude, slow amplitude, noise sd, spike rate)
        let (base, amp, slow, sd, spikes) = match profile {
            Profile::Mixed => (rng.gen_range(0.35..0.65), rng.gen_range(0.15..0.3), rng.gen_range(0.1..0.2), 0.04, 0.0),
            Profile::LowCarbonHeavy if r < n_low => (rng.gen_range(0.08..0.14), rng.gen_range(0.02..0.04), 0.02, 0.01, 0.0),
            Profile::LowCarbonHeavy => (rng.gen_range(0.55..0.75), rng.gen_range(0.05..0.1), 0.05, 0.02, 0.0),
            Profile::Volatile => (rng.gen_range(0.3..0.7), rng.gen_range(0.15..0.3), rng.gen_range(0.05..0.15), 0.1, 0.03),
        };
        let phase = rng.gen_range(0.0..24.0);
        let period = rng.gen_range(72.0..168.0);
        let slow_phase = rng.gen_range(0.0..period);
        let noise = Normal::new(0.0, sd).map_err(|e| SoadError::Internal(e.to_string()))?;
        let row = (0..hours)
            .map(|h| {
                let x = h as f64;
                let mut v = base
                    + amp * (std::f64::consts::TAU * (x + phase) / 24.0).sin()
                    + slow * (std::f64::consts::TAU * (x + slow_phase) / period).sin()
                    + noise.sample(&mut rng);
                if spikes > 0.0 && rng.gen_bool(spikes) {
                    v += rng.gen_range(0.2..0.5);
                }
                lo + span * v.clamp(0.0, 1.0)
            })
            .collect();
        values.push(row);
    }
    let trace = CarbonTrace { regions: (0..n).map(|r| format!("r{r}")).collect(), times, values, gaps: Vec::new() };
    trace.check()?;
    Ok(trace)
}

/// Symmetric transfer-time matrix in hours per GB: one lognormal draw per
/// pair, closed under shortest paths.
pub fn sample_latency(n: usize, median_h_per_gb: f64, sigma: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let ln = LogNormal::new(median_h_per_gb.ln(), sigma).map_err(|e| SoadError::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = vec![vec![0.0; n]; n];
    for u in 0..n {
        for v in u + 1..n {
            let a = ln.sample(&mut rng);
            let b = ln.sample(&mut rng);
            d[u][v] = 0.5 * (a + b);
            d[v][u] = d[u][v];
        }
    }
    floyd_warshall(&mut d);
    Ok(d)
}

/// One batch job placed on a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    /// Arrival hour (index into the trace).
    pub arrival: usize,
    /// Arrival region, the start point.
    pub region: usize,
    /// Job length `J` in slots.
    pub length: usize,
    /// Deadline `T` in slots after arrival.
    pub deadline: usize,
    /// Data moved per migration, GB.
    pub data_gb: f64,
    /// Transfer energy relative to full-allocation execution.
    pub kappa: f64,
    pub tau: f64,
    /// Hours before arrival used for `L`, `U` and the network intensity.
    pub lookback: usize,
}

/// Builds the instance for `job`. `L`/`U` are the extremes over the
/// lookback window and the job window; movement costs are
/// `latency * G * kappa / J` times the mean intensity of that span.
pub fn build_instance(trace: &CarbonTrace, job: &JobSpec, latency: &[Vec<f64>]) -> Result<Instance> {
    let n = trace.n_regions();
    let (j, t) = (job.length, job.deadline);
    if j == 0 || t < j {
        return Err(SoadError::Domain(format!("need 1 <= J <= T, got J={j} T={t}")));
    }
    if job.arrival + t > trace.hours() {
        return Err(SoadError::Domain(format!("job window {}..{} exceeds trace of {} hours", job.arrival, job.arrival + t, trace.hours())));
    }
    if job.region >= n || latency.len() != n || latency.iter().any(|r| r.len() != n) {
        return Err(SoadError::LengthMismatch { expected: n, got: latency.len() });
    }
    if !(job.data_gb >= 0.0 && (0.0..=1.0).contains(&job.kappa) && job.tau >= 0.0) {
        return Err(SoadError::Domain(format!("need G >= 0, kappa in [0,1], tau >= 0; got {job:?}")));
    }
    let from = job.arrival.saturating_sub(job.lookback);
    let to = job.arrival + t;
    let span = || trace.values.iter().flat_map(|row| row[from..to].iter().copied());
    let lower = span().fold(f64::INFINITY, f64::min);
    let upper = span().fold(f64::NEG_INFINITY, f64::max);
    let mean = span().sum::<f64>() / (n * (to - from)) as f64;
    let c = 1.0 / j as f64;
    let scale = job.data_gb * job.kappa * c * mean;
    let dist = latency.iter().map(|row| row.iter().map(|x| x * scale).collect()).collect();
    let costs = (job.arrival..to).map(|h| (0..n).map(|u| trace.values[u][h] * c).collect()).collect();
    let inst = Instance {
        metric: MetricSpace::new(dist, vec![c; n], vec![job.tau * c; n])?,
        horizon: t,
        lower,
        upper,
        costs,
        start: job.region,
        tv_dist: None,
        d_declared: None,
    };
    validate(&inst).map_err(|v| SoadError::InvalidInstance(v.join("; ")))?;
    Ok(inst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Synthetic { regions: usize, hours: usize, profile: Profile },
    Trace { path: String },
    Adversary { family: Family, y_points: usize, upper: f64, lower: f64, d: f64, tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobLength {
    Fixed { value: usize },
    /// `ceil` of a lognormal draw, redrawn above `max`.
    LogNormal { mu: f64, sigma: f64, max: usize },
}

impl JobLength {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<usize> {
        match *self {
            JobLength::Fixed { value } => Ok(value),
            JobLength::LogNormal { mu, sigma, max } => {
                let d = LogNormal::new(mu, sigma).map_err(|e| SoadError::Domain(e.to_string()))?;
                for _ in 0..1000 {
                    let x = d.sample(rng).ceil();
                    if x <= max as f64 {
                        return Ok((x as usize).max(1));
                    }
                }
                Ok(max)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Deadline {
    Fixed { value: usize },
    Uniform { min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdviceKind {
    /// Optimal decisions for a noisy forecast.
    Forecast,
    /// `(1 - xi) OPT + xi MAX`.
    Blend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithms: Vec<String>,
    #[serde(default = "default_eps")]
    pub epsilons: Vec<f64>,
    pub source: Source,
    #[serde(default = "default_length")]
    pub job_length: JobLength,
    #[serde(default = "default_deadline")]
    pub deadline: Deadline,
    #[serde(default = "default_g")]
    pub data_gb: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub volatility: usize,
    #[serde(default = "default_advice")]
    pub advice: AdviceKind,
    #[serde(default)]
    pub xi: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_lookback")]
    pub lookback_hours: usize,
    #[serde(default = "default_latency")]
    pub latency_median_h_per_gb: f64,
    #[serde(default = "default_sigma")]
    pub latency_sigma: f64,
}

fn default_eps() -> Vec<f64> {
    vec![0.5]
}
fn default_length() -> JobLength {
    JobLength::LogNormal { mu: 1.0, sigma: 0.8, max: 12 }
}
fn default_deadline() -> Deadline {
    Deadline::Uniform { min: 12, max: 48 }
}
fn default_g() -> f64 {
    4.0
}
fn default_kappa() -> f64 {
    0.5
}
fn default_tau() -> f64 {
    1.0
}
fn default_advice() -> AdviceKind {
    AdviceKind::Forecast
}
fn default_reps() -> usize {
    100
}
fn default_lookback() -> usize {
    720
}
fn default_latency() -> f64 {
    0.02
}
fn default_sigma() -> f64 {
    0.5
}

pub const ALGORITHMS: [&str; 7] = ["pcm", "stclip", "offline", "agnostic", "greedy", "delayed_greedy", "simple_threshold"];

impl ExperimentConfig {
    /// Synthetic defaults with the given algorithms.
    pub fn synthetic(algorithms: &[&str], regions: usize, hours: usize, profile: Profile) -> ExperimentConfig {
        ExperimentConfig {
            algorithms: algorithms.iter().map(|s| s.to_string()).collect(),
            epsilons: default_eps(),
            source: Source::Synthetic { regions, hours, profile },
            job_length: default_length(),
            deadline: default_deadline(),
            data_gb: default_g(),
            kappa: default_kappa(),
            tau: default_tau(),
            volatility: 0,
            advice: default_advice(),
            xi: 0.0,
            seed: 0,
            repetitions: default_reps(),
            lookback_hours: default_lookback(),
            latency_median_h_per_gb: default_latency(),
            latency_sigma: default_sigma(),
        }
    }

    pub fn from_json(s: &str) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(SoadError::Domain("repetitions must be at least 1".into()));
        }
        if let Some(a) = self.algorithms.iter().find(|a| !ALGORITHMS.contains(&a.as_str())) {
            return Err(SoadError::Domain(format!("unknown algorithm {a}; expected one of {}", ALGORITHMS.join(", "))));
        }
        if self.algorithms.iter().any(|a| a == "stclip") && (self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0))) {
            return Err(SoadError::Domain("stclip needs a non-empty list of positive epsilons".into()));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(SoadError::Domain(format!("xi must lie in [0,1], got {}", self.xi)));
        }
        if let Source::Adversary { y_points, .. } = self.source {
            if y_points < 2 {
                return Err(SoadError::Domain("adversary source needs at least two y points".into()));
            }
        }
        Ok(())
    }

    fn instance_count(&self) -> usize {
        match self.source {
            Source::Adversary { y_points, .. } => y_points * self.repetitions,
            _ => self.repetitions,
        }
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: usize,
    pub alg: String,
    pub objective: f64,
    pub opt: f64,
    pub cr: f64,
    pub feasible: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub instance_id: usize,
    pub alg: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub alg: String,
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub alg: String,
    pub cr: f64,
    pub cum_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub errors: Vec<RunError>,
}

impl ExperimentResults {
    pub fn summary(&self) -> Vec<Summary> {
        summarize(&self.rows)
    }

    pub fn cdf(&self) -> Vec<CdfPoint> {
        cdf(&self.rows)
    }
}

fn instance_seed(base: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(i as u64 + 1);
    rng.gen()
}

/// Shared inputs of a synthetic or trace-driven batch.
struct TraceSetup {
    trace: CarbonTrace,
    latency: Vec<Vec<f64>>,
}

fn trace_setup(cfg: &ExperimentConfig) -> Result<Option<TraceSetup>> {
    let trace = match &cfg.source {
        Source::Synthetic { regions, hours, profile } => synthesize_trace(*regions, *hours, cfg.seed, *profile)?,
        Source::Trace { path } => ingest_trace(path)?,
        Source::Adversary { .. } => return Ok(None),
    };
    let latency = sample_latency(trace.n_regions(), cfg.latency_median_h_per_gb, cfg.latency_sigma, cfg.seed ^ 0x5eed)?;
    Ok(Some(TraceSetup { trace, latency }))
}

/// Instance `i` of the batch, before volatility.
fn make_instance(cfg: &ExperimentConfig, setup: Option<&TraceSetup>, i: usize, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match (&cfg.source, setup) {
        (Source::Adversary { family, y_points, upper, lower, d, tau }, _) => {
            let k = i % y_points;
            let y = lower + (upper - lower) * k as f64 / (*y_points - 1) as f64;
            let params = AdversaryParams::new(*family, y, *upper, *lower, *d, *tau);
            let mut probe = Pcm::new(&adversary_skeleton(&params)?, seed, false)?;
            generate_y_adversary(&params, &mut probe)
        }
        (_, Some(s)) => {
            let length = cfg.job_length.sample(&mut rng)?;
            let deadline = match cfg.deadline {
                Deadline::Fixed { value } => value,
                Deadline::Uniform { min, max } => rng.gen_range(min..=max.max(min)),
            }
            .max(length);
            let hours = s.trace.hours();
            let earliest = cfg.lookback_hours.min(hours.saturating_sub(deadline));
            if hours < deadline {
                return Err(SoadError::Domain(format!("trace has {hours} hours, deadline needs {deadline}")));
            }
            let arrival = rng.gen_range(earliest..=hours - deadline);
            let job = JobSpec {
                arrival,
                region: rng.gen_range(0..s.trace.n_regions()),
                length,
                deadline,
                data_gb: cfg.data_gb,
                kappa: cfg.kappa,
                tau: cfg.tau,
                lookback: cfg.lookback_hours,
            };
            build_instance(&s.trace, &job, &s.latency)
        }
        (_, None) => Err(SoadError::Internal("trace source without trace".into())),
    }
}

fn make_advice(cfg: &ExperimentConfig, inst: &Instance, seed: u64) -> Result<Advice> {
    match cfg.advice {
        AdviceKind::Forecast => make_advice_from_forecast(inst, &noisy_forecast(inst, seed)),
        AdviceKind::Blend => make_adversarial_advice(inst, cfg.xi),
    }
}

/// Label used for ST-CLIP rows.
pub fn stclip_label(eps: f64) -> String {
    format!("stclip-{eps}")
}

fn run_instance(cfg: &ExperimentConfig, setup: Option<&TraceSetup>, i: usize) -> ExperimentResults {
    let seed = instance_seed(cfg.seed, i);
    let mut out = ExperimentResults::default();
    let fail = |alg: &str, e: SoadError| RunError { instance_id: i, alg: alg.to_string(), message: e.to_string() };
    let inst = match make_instance(cfg, setup, i, seed).and_then(|inst| {
        if cfg.volatility > 0 {
            apply_volatility(&inst, cfg.volatility, seed ^ 0x7f)
        } else {
            Ok(inst)
        }
    }) {
        Ok(x) => x,
        Err(e) => {
            out.errors.push(fail("instance", e));
            return out;
        }
    };
    let opt = match solve_offline_optimal(&inst) {
        Ok(r) => r.objective,
        Err(e) => {
            out.errors.push(fail("offline", e));
            return out;
        }
    };
    let tv = inst.tv_dist.is_some();
    let mut record = |alg: String, r: Result<RunResult>| match r {
        Ok(r) => out.rows.push(ResultRow {
            instance_id: i,
            alg,
            objective: r.objective,
            opt,
            cr: r.objective / opt,
            feasible: r.feasible,
            seed,
        }),
        Err(e) => out.errors.push(RunError { instance_id: i, alg, message: e.to_string() }),
    };
    for alg in &cfg.algorithms {
        match alg.as_str() {
            "pcm" => record(alg.clone(), if tv { run_pcm_tv(&inst, seed) } else { run_pcm(&inst, seed) }),
            "offline" => record(alg.clone(), solve_offline_optimal(&inst)),
            "agnostic" => record(alg.clone(), run_carbon_agnostic(&inst)),
            "greedy" => record(alg.clone(), run_greedy(&inst)),
            "delayed_greedy" => record(alg.clone(), run_delayed_greedy(&inst, &noisy_forecast(&inst, seed))),
            "simple_threshold" => record(alg.clone(), run_simple_threshold(&inst)),
            "stclip" => {
                let advice = make_advice(cfg, &inst, seed);
                let eta = solve_eta(inst.upper, inst.lower, inst.d_bound(), inst.tau());
                for &eps in &cfg.epsilons {
                    let r = match (&advice, &eta) {
                        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                        (Ok(_), Ok(eta)) if eps > eta - 1.0 + 1e-12 => {
                            Err(SoadError::Domain(format!("epsilon {eps} outside (0, eta - 1 = {}]", eta - 1.0)))
                        }
                        (Ok(a), Ok(_)) => {
                            if tv {
                                run_stclip_tv(&inst, a, eps, seed)
                            } else {
                                run_stclip(&inst, a, eps, seed)
                            }
                        }
                    };
                    record(stclip_label(eps), r);
                }
            }
            other => record(other.to_string(), Err(SoadError::Domain(format!("unknown algorithm {other}")))),
        }
    }
    out
}

/// Runs the batch in parallel; results are ordered by instance index.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.check()?;
    let setup = trace_setup(cfg)?;
    let parts: Vec<ExperimentResults> =
        (0..cfg.instance_count()).into_par_iter().map(|i| run_instance(cfg, setup.as_ref(), i)).collect();
    let mut all = ExperimentResults::default();
    for p in parts {
        all.rows.extend(p.rows);
        all.errors.extend(p.errors);
    }
    Ok(all)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn grouped(rows: &[ResultRow]) -> Vec<(String, Vec<f64>)> {
    let mut order: Vec<String> = Vec::new();
    let mut map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if !map.contains_key(&r.alg) {
            order.push(r.alg.clone());
        }
        map.entry(r.alg.clone()).or_default().push(r.cr);
    }
    order
        .into_iter()
        .map(|a| {
            let mut v = map.remove(&a).unwrap_or_default();
            v.sort_by(f64::total_cmp);
            (a, v)
        })
        .collect()
}

/// Mean and nearest-rank percentiles of the CR per algorithm.
pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    grouped(rows)
        .into_iter()
        .map(|(alg, v)| Summary {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: percentile(&v, 0.5),
            p90: percentile(&v, 0.9),
            p99: percentile(&v, 0.99),
            max: v[v.len() - 1],
            alg,
        })
        .collect()
}

/// Empirical CDF of the CR per algorithm.
pub fn cdf(rows: &[ResultRow]) -> Vec<CdfPoint> {
    let mut out = Vec::new();
    for (alg, v) in grouped(rows) {
        let m = v.len() as f64;
        for (k, cr) in v.iter().enumerate() {
            out.push(CdfPoint { alg: alg.clone(), cr: *cr, cum_fraction: (k + 1) as f64 / m });
        }
    }
    out
}

fn write_rows<T: Serialize>(rows: &[T], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(reader: impl Read) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(SoadError::from)).collect()
}

/// Writes `instance_id,alg,objective,opt,cr,feasible,seed`.
pub fn write_results_csv(rows: &[ResultRow], writer: impl Write) -> Result<()> {
    write_rows(rows, writer)
}

pub fn read_results_csv(reader: impl Read) -> Result<Vec<ResultRow>> {
    read_rows(reader)
}

/// Writes `alg,cr,cum_fraction`.
pub fn write_cdf_csv(points: &[CdfPoint], writer: impl Write) -> Result<()> {
    write_rows(points, writer)
}

pub fn read_cdf_csv(reader: impl Read) -> Result<Vec<CdfPoint>> {
    read_rows(reader)
}
