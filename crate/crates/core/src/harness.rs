//! Seeded generate-then-detect runs and their batch summary.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{generate, DatagenError, LabeledNetwork, SyntheticConfig};
use crate::detector::{run_detection, DetectionReport, DetectorConfig, DetectorError};
use crate::fuzzy::FuzzyInferenceSystem;
use crate::metrics::{evaluate, mean_defined, MetricsError, RunMetrics};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("runs must be at least 1")]
    NoRuns,
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One generated network, its detection report (metrics filled in) and the network itself.
pub fn run_once(
    synthetic: &SyntheticConfig,
    fis: &FuzzyInferenceSystem,
    detector: &DetectorConfig,
    config_echo: &serde_json::Value,
) -> Result<(LabeledNetwork, DetectionReport), HarnessError> {
    let net = generate(synthetic)?;
    let mut report = run_detection(&net.records, fis, detector)?;
    report.metrics = Some(evaluate(&report, &net.ground_truth())?);
    report.seed = Some(synthetic.seed);
    report.config = config_echo.clone();
    Ok((net, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub iterations_used: usize,
    pub converged: bool,
    pub metrics: RunMetrics,
}

/// Means over the runs; `failures` counts runs below the accuracy floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMean {
    pub accuracy: Option<f64>,
    pub detection_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub precision: Option<f64>,
    pub f_score: Option<f64>,
    pub filtering_rate: Option<f64>,
    pub convergence_value: Option<f64>,
    pub users_recovered_pct: Option<f64>,
    pub soft_recovered_pct: Option<f64>,
    pub iterations_used: Option<f64>,
    pub failures: usize,
    pub non_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: Vec<RunResult>,
    pub mean: BatchMean,
}

/// `runs` independent runs with seeds `base.seed + i`, evaluated in parallel.
pub fn run_batch(
    base: &SyntheticConfig,
    runs: usize,
    fis: &FuzzyInferenceSystem,
    detector: &DetectorConfig,
) -> Result<BatchSummary, HarnessError> {
    if runs == 0 {
        return Err(HarnessError::NoRuns);
    }
    base.validate()?;
    let results: Vec<RunResult> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let cfg = SyntheticConfig {
                seed: base.seed.wrapping_add(i as u64),
                ..base.clone()
            };
            let (_, report) = run_once(&cfg, fis, detector, &serde_json::Value::Null)?;
            Ok(RunResult {
                run: i,
                seed: cfg.seed,
                iterations_used: report.iterations.used,
                converged: report.iterations.converged,
                metrics: report.metrics.expect("run_once fills metrics"),
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(summarize(results))
}

pub fn summarize(runs: Vec<RunResult>) -> BatchSummary {
    let m = |f: fn(&RunMetrics) -> Option<f64>| mean_defined(runs.iter().map(|r| f(&r.metrics)));
    let mean = BatchMean {
        accuracy: m(|x| x.accuracy),
        detection_rate: m(|x| x.detection_rate),
        false_positive_rate: m(|x| x.false_positive_rate),
        precision: m(|x| x.precision),
        f_score: m(|x| x.f_score),
        filtering_rate: m(|x| Some(x.filtering_rate)),
        convergence_value: m(|x| x.convergence_value),
        users_recovered_pct: m(|x| x.users_recovered_pct),
        soft_recovered_pct: m(|x| x.soft_recovered_pct),
        iterations_used: mean_defined(runs.iter().map(|r| Some(r.iterations_used as f64))),
        failures: runs.iter().filter(|r| r.metrics.failed).count(),
        non_converged: runs.iter().filter(|r| !r.converged).count(),
    };
    BatchSummary { runs, mean }
}

pub const SUMMARY_HEADER: [&str; 14] = [
    "run",
    "seed",
    "filtering_rate",
    "users_recovered_pct",
    "soft_recovered_pct",
    "accuracy",
    "failed",
    "convergence_value",
    "detection_rate",
    "false_positive_rate",
    "precision",
    "f_score",
    "iterations_used",
    "converged",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Per-run rows followed by a `mean` row. In the mean row `failed` holds the
/// failure count and `converged` the number of non-converged runs.
pub fn write_summary_csv<W: Write>(summary: &BatchSummary, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in &summary.runs {
        let m = &r.metrics;
        w.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            cell(Some(m.filtering_rate)),
            cell(m.users_recovered_pct),
            cell(m.soft_recovered_pct),
            cell(m.accuracy),
            u8::from(m.failed).to_string(),
            cell(m.convergence_value),
            cell(m.detection_rate),
            cell(m.false_positive_rate),
            cell(m.precision),
            cell(m.f_score),
            r.iterations_used.to_string(),
            u8::from(r.converged).to_string(),
        ])?;
    }
    let m = &summary.mean;
    w.write_record([
        "mean".to_string(),
        String::new(),
        cell(m.filtering_rate),
        cell(m.users_recovered_pct),
        cell(m.soft_recovered_pct),
        cell(m.accuracy),
        m.failures.to_string(),
        cell(m.convergence_value),
        cell(m.detection_rate),
        cell(m.false_positive_rate),
        cell(m.precision),
        cell(m.f_score),
        cell(m.iterations_used),
        m.non_converged.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
