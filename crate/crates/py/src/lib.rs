//! Python bindings: fuzzy inference, the cost equations, synthetic
//! generation, detection and batch evaluation.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use nhad::datagen::{generate as generate_network, LabeledNetwork, SyntheticConfig};
use nhad::detector::{run_detection, Band, DetectionReport, DetectorConfig};
use nhad::fuzzy::{self, build_default_fis, load_rules, FuzzyInferenceSystem, INPUTS};
use nhad::harness::run_batch;
use nhad::healing::{self, HealingThresholds};
use nhad::ingest::{
    parse_activity_csv, parse_labels_csv, write_activity_csv, write_labels_csv, write_report,
    IngestError, ReportFormat,
};
use nhad::metrics::{evaluate as score, GroundTruth};
use nhad::reputation::{self, ActivityRecord, ReputationState};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ingest_err(e: IngestError) -> PyErr {
    match e {
        IngestError::IoError(m) => PyIOError::new_err(m),
        other => value_err(other),
    }
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn activations(v: Vec<f64>) -> PyResult<[f64; INPUTS]> {
    v.try_into().map_err(|v: Vec<f64>| {
        PyValueError::new_err(format!("expected {INPUTS} activations, got {}", v.len()))
    })
}

/// Mamdani inference system; the built-in rule base unless `rules` names a rule file.
#[pyclass(name = "FuzzySystem", frozen)]
struct PyFuzzySystem {
    inner: FuzzyInferenceSystem,
}

#[pymethods]
impl PyFuzzySystem {
    #[new]
    #[pyo3(signature = (rules=None, samples=None))]
    fn new(rules: Option<PathBuf>, samples: Option<usize>) -> PyResult<Self> {
        let mut fis = build_default_fis();
        if let Some(path) = rules {
            let parsed = load_rules(&path, &fis).map_err(value_err)?;
            fis = fis.with_rules(parsed).map_err(value_err)?;
        }
        if let Some(n) = samples {
            fis = fis.with_samples(n).map_err(value_err)?;
        }
        Ok(Self { inner: fis })
    }

    fn crisp(&self, activations: Vec<f64>) -> PyResult<f64> {
        self.inner
            .crisp(&self::activations(activations)?)
            .map_err(value_err)
    }

    #[getter]
    fn rule_count(&self) -> usize {
        self.inner.rules().len()
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples()
    }

    fn __repr__(&self) -> String {
        format!(
            "FuzzySystem(rules={}, samples={})",
            self.inner.rules().len(),
            self.inner.samples()
        )
    }
}

/// Labeled synthetic network.
#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    inner: LabeledNetwork,
}

#[pymethods]
impl PyNetwork {
    #[getter]
    fn user_count(&self) -> usize {
        self.inner.users.len()
    }

    #[getter]
    fn record_count(&self) -> usize {
        self.inner.records.len()
    }

    #[getter]
    fn flagged_sources(&self) -> usize {
        self.inner.flagged_sources()
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.records)
    }

    fn labels<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.labels)
    }

    /// Writes `activity.csv` and `labels.csv` into `directory`.
    fn write_csv(&self, directory: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&directory).map_err(|e| PyIOError::new_err(e.to_string()))?;
        write_activity_csv(directory.join("activity.csv"), &self.inner.records)
            .map_err(ingest_err)?;
        write_labels_csv(directory.join("labels.csv"), &self.inner.labels).map_err(ingest_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(users={}, records={}, flagged_sources={})",
            self.inner.users.len(),
            self.inner.records.len(),
            self.inner.flagged_sources()
        )
    }
}

#[pyclass(name = "Report", frozen)]
struct PyReport {
    inner: DetectionReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.iterations.converged
    }

    #[getter]
    fn iterations_used(&self) -> usize {
        self.inner.iterations.used
    }

    /// Final band per user id.
    fn bands(&self) -> Vec<(String, String)> {
        self.inner
            .verdicts
            .iter()
            .map(|v| (v.user_id.clone(), v.band.as_str().to_string()))
            .collect()
    }

    fn count(&self, band: &str) -> PyResult<usize> {
        let band = Band::parse(band)
            .ok_or_else(|| PyValueError::new_err(format!("unknown band {band:?}")))?;
        Ok(self.inner.count(band))
    }

    fn verdicts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.verdicts)
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.metrics)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(value_err)
    }

    #[pyo3(signature = (path, format="json"))]
    fn save(&self, path: PathBuf, format: &str) -> PyResult<()> {
        let format: ReportFormat = format.parse().map_err(PyValueError::new_err)?;
        write_report(&self.inner, path, format).map_err(ingest_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(users={}, iterations={}, converged={})",
            self.inner.verdicts.len(),
            self.inner.iterations.used,
            self.inner.iterations.converged
        )
    }
}

fn detector_config(safe: f64, hard: f64, warnings: u32, budget: usize) -> PyResult<DetectorConfig> {
    if budget == 0 {
        return Err(PyValueError::new_err("budget must be at least 1"));
    }
    Ok(DetectorConfig {
        thresholds: HealingThresholds::new(safe, hard, warnings).map_err(value_err)?,
        budget,
    })
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (lambda_=100.0, communities=10, sources=100.0, anomaly=0.1, active=1.0, seed=0))]
fn generate(
    lambda_: f64,
    communities: usize,
    sources: f64,
    anomaly: f64,
    active: f64,
    seed: u64,
) -> PyResult<PyNetwork> {
    let cfg = SyntheticConfig {
        n_communities: communities,
        lambda: lambda_,
        source_lambda: sources,
        anomaly_fraction: anomaly,
        active_user_fraction: active,
        seed,
        ..SyntheticConfig::default()
    };
    Ok(PyNetwork {
        inner: generate_network(&cfg).map_err(value_err)?,
    })
}

/// Runs detection over a `Network` or an activity CSV path. Labels come from
/// the network itself or from `labels` (a labels CSV path).
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (source, labels=None, fis=None, safe=0.5, hard=0.7, warnings=3, budget=50))]
fn detect(
    py: Python<'_>,
    source: &Bound<'_, PyAny>,
    labels: Option<PathBuf>,
    fis: Option<&PyFuzzySystem>,
    safe: f64,
    hard: f64,
    warnings: u32,
    budget: usize,
) -> PyResult<PyReport> {
    let cfg = detector_config(safe, hard, warnings, budget)?;
    let (records, mut truth): (Vec<ActivityRecord>, Option<GroundTruth>) =
        if let Ok(net) = source.cast::<PyNetwork>() {
            let net = &net.get().inner;
            (net.records.clone(), Some(net.ground_truth()))
        } else {
            let path: PathBuf = source.extract()?;
            (parse_activity_csv(path).map_err(ingest_err)?, None)
        };
    if let Some(path) = labels {
        let rows = parse_labels_csv(path).map_err(ingest_err)?;
        truth = Some(GroundTruth::from_labels(&rows).map_err(value_err)?);
    }
    let default_fis;
    let fis = match fis {
        Some(f) => &f.inner,
        None => {
            default_fis = build_default_fis();
            &default_fis
        }
    };
    let mut report = py
        .detach(|| run_detection(&records, fis, &cfg))
        .map_err(value_err)?;
    if let Some(t) = &truth {
        report.metrics = Some(score(&report, t).map_err(value_err)?);
    }
    Ok(PyReport { inner: report })
}

/// Batch of seeded generate+detect runs; returns the per-run rows and means.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (runs=20, seed=0, lambda_=100.0, communities=10, sources=100.0, anomaly=0.1, active=1.0, safe=0.5, hard=0.7, warnings=3, budget=50))]
fn evaluate<'py>(
    py: Python<'py>,
    runs: usize,
    seed: u64,
    lambda_: f64,
    communities: usize,
    sources: f64,
    anomaly: f64,
    active: f64,
    safe: f64,
    hard: f64,
    warnings: u32,
    budget: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let base = SyntheticConfig {
        n_communities: communities,
        lambda: lambda_,
        source_lambda: sources,
        anomaly_fraction: anomaly,
        active_user_fraction: active,
        seed,
        ..SyntheticConfig::default()
    };
    let cfg = detector_config(safe, hard, warnings, budget)?;
    let fis = build_default_fis();
    let summary = py
        .detach(|| run_batch(&base, runs, &fis, &cfg))
        .map_err(value_err)?;
    to_py(py, &summary)
}

#[pyfunction]
fn defuzzify_cog(curve: Vec<f64>, lower: f64, upper: f64) -> PyResult<f64> {
    fuzzy::defuzzify_cog(&curve, lower, upper).map_err(value_err)
}

/// Θ of one link, clamped to [0, 1].
#[pyfunction]
fn connectivity_constant(
    hits_other: u64,
    hits_same: u64,
    spam: u64,
    total: u64,
    gamma: f64,
) -> f64 {
    let rec = ActivityRecord {
        user_id: String::new(),
        community_id: String::new(),
        source_id: String::new(),
        hits_other,
        hits_same,
        spam_requests: spam,
        total_requests: total,
        activations: [0.0; INPUTS],
    };
    reputation::connectivity_constant(&rec, gamma)
}

#[pyfunction]
fn reputation_gain(theta: Vec<f64>) -> PyResult<f64> {
    Ok(reputation::reputation_gain(&activations(theta)?))
}

#[pyfunction]
fn significant_difference(history: Vec<f64>) -> PyResult<f64> {
    reputation::significant_difference(&history).map_err(value_err)
}

/// Normalised per-user cost for deviation `d_s` and `k_prime` of `k` links flagged.
#[pyfunction]
fn user_healing_cost(d_s: f64, k_prime: usize, k: usize) -> PyResult<f64> {
    let state = ReputationState {
        user_id: String::new(),
        rg_history: vec![0.0; k],
        rg_mean: 0.0,
        d_s,
        k_prime,
        k,
    };
    healing::user_healing_cost(&state).map_err(value_err)
}

#[pyfunction]
fn final_cost(s_f_user: f64, c_g_crisp: f64) -> f64 {
    healing::final_cost(s_f_user, c_g_crisp)
}

#[pymodule]
fn nhad_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFuzzySystem>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(defuzzify_cog, m)?)?;
    m.add_function(wrap_pyfunction!(connectivity_constant, m)?)?;
    m.add_function(wrap_pyfunction!(reputation_gain, m)?)?;
    m.add_function(wrap_pyfunction!(significant_difference, m)?)?;
    m.add_function(wrap_pyfunction!(user_healing_cost, m)?)?;
    m.add_function(wrap_pyfunction!(final_cost, m)?)?;
    m.add(
        "BANDS",
        Band::ALL.iter().map(|b| b.as_str()).collect::<Vec<_>>(),
    )?;
    Ok(())
}
