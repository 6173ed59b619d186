//! Configuration-driven experiments: run Monte Carlo trials, aggregate them
//! and compare against the asymptotic predictions.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lab::{deform, sample_ensemble, spectrum_and_overlaps, trial_rng, trial_seed, EnsembleSpec, TrialRecord};
use crate::prediction::{predict, predict_multiplicative_overlap, Model, OverlapVariant, SpikePrediction, SpikeSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "SPIKE_THREADS";

fn default_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tolerance")]
    pub eigenvalue_abs: f64,
    #[serde(default = "default_tolerance")]
    pub overlap_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { eigenvalue_abs: default_tolerance(), overlap_abs: default_tolerance() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub ensemble: EnsembleSpec,
    pub spikes: SpikeSpec,
    pub model: Model,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
    /// Number of largest / smallest eigenvalues recorded per trial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_top: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_bottom: Option<usize>,
    /// Adds a wallclock column to the trial CSV (which then differs run to run).
    #[serde(default)]
    pub record_wallclock: bool,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        self.ensemble.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let t = self.tolerances;
        if !(t.eigenvalue_abs > 0.0 && t.overlap_abs > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.spikes.rank() > self.ensemble.n() {
            return Err(Error::Config(format!(
                "rank {} exceeds the matrix size {}",
                self.spikes.rank(),
                self.ensemble.n()
            )));
        }
        let (top, bottom) = self.recorded_counts();
        if top < self.spikes.positive() || bottom < self.spikes.rank() - self.spikes.positive() {
            return Err(Error::Config("k_top / k_bottom must cover every positive / negative spike".into()));
        }
        Ok(())
    }

    /// `(k_top, k_bottom)`, defaulting to one more than the spikes on each side.
    pub fn recorded_counts(&self) -> (usize, usize) {
        let s = self.spikes.positive();
        let neg = self.spikes.rank() - s;
        (self.k_top.unwrap_or(s + 1), self.k_bottom.unwrap_or(neg + 1))
    }

    /// Same experiment with a single spike of strength `theta`.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        let mut c = self.clone();
        c.spikes = SpikeSpec::new(vec![theta])?;
        c.k_top = None;
        c.k_bottom = None;
        c.validate()?;
        Ok(c)
    }

    /// Stable 64-bit FNV-1a hash of the canonical JSON form, as hex.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Thread count from `SPIKE_THREADS`; `None` leaves the choice to rayon.
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        _ => Ok(None),
    }
}

fn run_one(config: &ExperimentConfig, index: u64) -> Result<TrialRecord> {
    let start = Instant::now();
    let seed = trial_seed(config.seed, index);
    let mut rng = trial_rng(seed);
    let x = sample_ensemble(&config.ensemble, &mut rng)?;
    let deformed = deform(&x, &config.spikes, config.model, &mut rng)?;
    let (k_top, k_bottom) = config.recorded_counts();
    let mut rec = spectrum_and_overlaps(&deformed, k_top, k_bottom)?;
    rec.seed = seed;
    rec.wallclock = start.elapsed().as_secs_f64();
    Ok(rec)
}

/// All trials of `config`, ordered by trial index however they were scheduled.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    // per-trial linear algebra stays sequential: the trials carry the parallelism,
    // and results do not depend on the thread count
    faer::set_global_parallelism(faer::Par::Seq);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_limit()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| (0..config.trials as u64).into_par_iter().map(|i| run_one(config, i)).collect())
}

pub fn trials_csv(records: &[TrialRecord], with_wallclock: bool) -> String {
    let mut out = String::new();
    if let Some(first) = records.first() {
        out.push_str(&first.csv_header(with_wallclock));
        out.push('\n');
    }
    for r in records {
        out.push_str(&r.csv_row(with_wallclock));
        out.push('\n');
    }
    out
}

/// One predicted-versus-empirical comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub spike: usize,
    pub theta: f64,
    /// `None` when the limit is not determined; the row is then informational.
    pub predicted: Option<f64>,
    pub empirical_mean: f64,
    pub empirical_stderr: f64,
    pub tolerance: f64,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub version: String,
    pub config_hash: String,
    pub model: Model,
    pub trials: usize,
    pub eigenvalues: Vec<CheckRow>,
    pub overlaps: Vec<CheckRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub similarity_overlaps: Vec<CheckRow>,
    pub pass: bool,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check(spike: usize, theta: f64, predicted: Option<f64>, samples: &[f64], tolerance: f64) -> CheckRow {
    let (mean, stderr) = mean_stderr(samples);
    CheckRow {
        spike,
        theta,
        predicted,
        empirical_mean: mean,
        empirical_stderr: stderr,
        tolerance,
        pass: predicted.map(|p| (mean - p).abs() <= tolerance),
    }
}

/// Empirical eigenvalue attached to spike `i` in a trial.
fn spike_eigenvalue(rec: &TrialRecord, spikes: &SpikeSpec, i: usize) -> f64 {
    if spikes.thetas()[i] > 0.0 {
        rec.top_eigenvalues[i]
    } else {
        rec.bottom_eigenvalues[spikes.rank() - 1 - i]
    }
}

/// Compare trial aggregates with predictions; a pure function of its inputs.
pub fn verify_records(
    config: &ExperimentConfig,
    prediction: &SpikePrediction,
    similarity: Option<&[Option<f64>]>,
    records: &[TrialRecord],
) -> Result<VerificationReport> {
    if records.is_empty() {
        return Err(domain("no trials to aggregate"));
    }
    let tol = config.tolerances;
    let spikes = &config.spikes;
    let mut eigenvalues = Vec::new();
    let mut overlaps = Vec::new();
    let mut similarity_overlaps = Vec::new();
    for (i, outcome) in prediction.spikes.iter().enumerate() {
        let lam: Vec<f64> = records.iter().map(|r| spike_eigenvalue(r, spikes, i)).collect();
        // the edge is approached at the slower n^{-2/3} scale
        let t = if outcome.detectable { tol.eigenvalue_abs } else { 2.0 * tol.eigenvalue_abs };
        eigenvalues.push(check(i, outcome.theta, Some(outcome.limit), &lam, t));
        let ov: Vec<f64> = records.iter().map(|r| r.overlaps_sq[i]).collect();
        overlaps.push(check(i, outcome.theta, outcome.overlap_sq, &ov, tol.overlap_abs));
        if let Some(sim) = similarity {
            let sv: Vec<f64> = records
                .iter()
                .map(|r| r.similarity_overlaps_sq.as_ref().map_or(f64::NAN, |s| s[i]))
                .collect();
            similarity_overlaps.push(check(i, outcome.theta, sim[i], &sv, tol.overlap_abs));
        }
    }
    let pass = eigenvalues
        .iter()
        .chain(&overlaps)
        .chain(&similarity_overlaps)
        .all(|row| row.pass != Some(false));
    Ok(VerificationReport {
        schema: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        model: config.model,
        trials: records.len(),
        eigenvalues,
        overlaps,
        similarity_overlaps,
        pass,
    })
}

pub struct ExperimentOutput {
    pub report: VerificationReport,
    pub records: Vec<TrialRecord>,
    pub csv: String,
}

/// Predictions for the spikes of `config` against its limiting measure, plus
/// the similarity overlaps when the model is multiplicative.
pub fn predictions(config: &ExperimentConfig) -> Result<(SpikePrediction, Option<Vec<Option<f64>>>)> {
    let measure = config.ensemble.limit_measure()?;
    let p = predict(&measure, &config.spikes, config.model)?;
    let sim = if config.model == Model::Multiplicative {
        let v = config
            .spikes
            .thetas()
            .iter()
            .map(|t| predict_multiplicative_overlap(&measure, *t, OverlapVariant::Similarity))
            .collect::<Result<Vec<_>>>()?;
        Some(v)
    } else {
        None
    };
    Ok((p, sim))
}

/// Run every trial, aggregate, and compare with the predictions.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let (prediction, sim) = predictions(config)?;
    let records = run_trials(config)?;
    let report = verify_records(config, &prediction, sim.as_deref(), &records)?;
    let csv = trials_csv(&records, config.record_wallclock);
    Ok(ExperimentOutput { report, records, csv })
}

/// Write the report and CSV wherever `outputs` points.
pub fn write_outputs(output: &ExperimentOutput, outputs: &Outputs) -> Result<()> {
    if let Some(path) = &outputs.report {
        std::fs::write(path, serde_json::to_string_pretty(&output.report)? + "\n")?;
    }
    if let Some(path) = &outputs.trials_csv {
        std::fs::write(path, &output.csv)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub predicted_limit: f64,
    pub predicted_overlap: Option<f64>,
    pub empirical_limit: Option<f64>,
    pub empirical_overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: Model,
    pub config_hash: String,
    pub points: Vec<SweepPoint>,
}

/// Reports the harness can produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Verification(VerificationReport),
    Sweep(SweepReport),
}

/// `steps` evenly spaced values from `from` to `to` inclusive.
pub fn sweep_grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..steps).map(|k| from + (to - from) * k as f64 / (steps - 1) as f64).collect(),
    }
}

/// Single-spike experiments over a θ grid. Without `simulate`, only the
/// predicted curve is filled in.
pub fn sweep(config: &ExperimentConfig, thetas: &[f64], simulate: bool) -> Result<SweepReport> {
    let measure = config.ensemble.limit_measure()?;
    let mut points = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let cfg = config.with_theta(theta)?;
        let p = predict(&measure, &cfg.spikes, cfg.model)?;
        let outcome = &p.spikes[0];
        let (empirical_limit, empirical_overlap) = if simulate {
            let records = run_trials(&cfg)?;
            let lam: Vec<f64> = records.iter().map(|r| spike_eigenvalue(r, &cfg.spikes, 0)).collect();
            let ov: Vec<f64> = records.iter().map(|r| r.overlaps_sq[0]).collect();
            (Some(mean_stderr(&lam).0), Some(mean_stderr(&ov).0))
        } else {
            (None, None)
        };
        points.push(SweepPoint {
            theta,
            predicted_limit: outcome.limit,
            predicted_overlap: outcome.overlap_sq,
            empirical_limit,
            empirical_overlap,
        });
    }
    Ok(SweepReport { model: config.model, config_hash: config.hash(), points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotStyle {
    TransitionCurve,
    OverlapCurve,
}

impl std::str::FromStr for PlotStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transition_curve" => Ok(PlotStyle::TransitionCurve),
            "overlap_curve" => Ok(PlotStyle::OverlapCurve),
            _ => Err(domain(format!("unknown plot style {s:?}"))),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// CSV with columns `theta,predicted,empirical` for a sweep; empty cells mark
/// unknown predictions or a sweep without simulation.
pub fn emit_plot_data(report: &Report, style: PlotStyle) -> Result<String> {
    let Report::Sweep(sweep) = report else {
        return Err(domain("plot data needs a sweep report"));
    };
    let mut out = String::from("theta,predicted,empirical\n");
    for p in &sweep.points {
        let (pred, emp) = match style {
            PlotStyle::TransitionCurve => (Some(p.predicted_limit), p.empirical_limit),
            PlotStyle::OverlapCurve => (p.predicted_overlap, p.empirical_overlap),
        };
        let _ = writeln!(out, "{:.16e},{},{}", p.theta, cell(pred), cell(emp));
    }
    Ok(out)
}
