//! Confusion counts and evaluation scores of detection runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{Band, DetectionReport, Verdict};

/// Accuracy below this marks a run as failed.
pub const FAILURE_ACCURACY: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    /// A labeled user has no verdict, or a verdict names an unlabeled user.
    #[error("label and verdict sets disagree at user {0}")]
    MissingVerdict(String),
    #[error("unknown anomaly class {0:?}")]
    UnknownClass(String),
    #[error("conflicting labels for user {0}")]
    ConflictingLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyClass {
    Benign,
    Soft,
    Hard,
}

impl AnomalyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyClass::Benign => "benign",
            AnomalyClass::Soft => "soft",
            AnomalyClass::Hard => "hard",
        }
    }

    pub fn parse(s: &str) -> Result<Self, MetricsError> {
        match s {
            "benign" => Ok(AnomalyClass::Benign),
            "soft" => Ok(AnomalyClass::Soft),
            "hard" => Ok(AnomalyClass::Hard),
            other => Err(MetricsError::UnknownClass(other.to_string())),
        }
    }

    pub fn is_injected(self) -> bool {
        self != AnomalyClass::Benign
    }
}

/// One row of the labels file. An empty `user_id` labels a source on its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub user_id: String,
    pub source_id: String,
    pub is_anomaly: bool,
    pub class: AnomalyClass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub users: BTreeMap<String, AnomalyClass>,
    pub sources: BTreeMap<String, bool>,
}

impl GroundTruth {
    pub fn from_labels(rows: &[LabelRow]) -> Result<Self, MetricsError> {
        let mut gt = GroundTruth::default();
        for row in rows {
            if !row.user_id.is_empty() {
                match gt.users.get(&row.user_id) {
                    Some(&c) if c != row.class => {
                        return Err(MetricsError::ConflictingLabel(row.user_id.clone()))
                    }
                    Some(_) => {}
                    None => {
                        gt.users.insert(row.user_id.clone(), row.class);
                    }
                }
            } else {
                *gt.sources.entry(row.source_id.clone()).or_insert(false) |= row.is_anomaly;
            }
        }
        Ok(gt)
    }

    pub fn injected(&self) -> impl Iterator<Item = (&str, AnomalyClass)> {
        self.users
            .iter()
            .filter(|(_, c)| c.is_injected())
            .map(|(u, &c)| (u.as_str(), c))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, actual: bool, predicted: bool) {
        match (actual, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }
}

/// Builds the confusion matrix.
///
/// Only hard-class users are actual positives: a soft-class user is expected
/// to end `Recovered`, which counts as a negative prediction.
pub fn confusion(truth: &GroundTruth, verdicts: &[Verdict]) -> Result<Confusion, MetricsError> {
    let mut by_user: BTreeMap<&str, &Verdict> = BTreeMap::new();
    for v in verdicts {
        if !truth.users.contains_key(&v.user_id) {
            return Err(MetricsError::MissingVerdict(v.user_id.clone()));
        }
        by_user.insert(&v.user_id, v);
    }
    let mut c = Confusion::default();
    for (user, class) in &truth.users {
        let v = by_user
            .get(user.as_str())
            .ok_or_else(|| MetricsError::MissingVerdict(user.clone()))?;
        c.record(*class == AnomalyClass::Hard, v.band.is_positive());
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Standard binary scores; `None` where the ratio is 0/0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: Option<f64>,
    pub detection_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub precision: Option<f64>,
    pub f_score: Option<f64>,
}

pub fn scores(c: &Confusion) -> Scores {
    let precision = ratio(c.tp, c.tp + c.fp);
    let detection_rate = ratio(c.tp, c.tp + c.fn_);
    let f_score = match (precision, detection_rate) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Scores {
        accuracy: ratio(c.tp + c.tn, c.total()),
        detection_rate,
        false_positive_rate: ratio(c.fp, c.fp + c.tn),
        precision,
        f_score,
    }
}

/// Normalised iterations: used over budget.
pub fn filtering_rate(report: &DetectionReport) -> f64 {
    let it = &report.iterations;
    if it.budget == 0 {
        return 1.0;
    }
    if !it.converged {
        return 1.0;
    }
    it.used as f64 / it.budget as f64
}

/// Percent; lower is better.
pub fn convergence_value(filtering_rate: f64, detected_fraction: f64) -> f64 {
    100.0 * filtering_rate * detected_fraction
}

/// Percent of ever-flagged users that ended `Recovered`.
pub fn recovered_pct(verdicts: &[Verdict]) -> Option<f64> {
    recovered_pct_of(verdicts.iter())
}

fn recovered_pct_of<'v>(verdicts: impl Iterator<Item = &'v Verdict>) -> Option<f64> {
    let (mut flagged, mut recovered) = (0usize, 0usize);
    for v in verdicts.filter(|v| v.flagged_as.is_some()) {
        flagged += 1;
        if v.band == Band::Recovered {
            recovered += 1;
        }
    }
    ratio(recovered, flagged).map(|r| 100.0 * r)
}

pub fn failure_flag(accuracy: Option<f64>) -> bool {
    accuracy.is_none_or(|a| a < FAILURE_ACCURACY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub confusion: Confusion,
    pub accuracy: Option<f64>,
    pub detection_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub precision: Option<f64>,
    pub f_score: Option<f64>,
    pub filtering_rate: f64,
    /// Injected anomalous users (either class) flagged at least once.
    pub detected_fraction: Option<f64>,
    pub convergence_value: Option<f64>,
    pub users_recovered_pct: Option<f64>,
    /// Recovery rate restricted to soft-class users.
    pub soft_recovered_pct: Option<f64>,
    pub failed: bool,
}

pub fn evaluate(report: &DetectionReport, truth: &GroundTruth) -> Result<RunMetrics, MetricsError> {
    let c = confusion(truth, &report.verdicts)?;
    let s = scores(&c);
    let (mut injected, mut detected) = (0usize, 0usize);
    for (user, _) in truth.injected() {
        injected += 1;
        if report.verdict(user).is_some_and(|v| v.flagged_as.is_some()) {
            detected += 1;
        }
    }
    let detected_fraction = ratio(detected, injected);
    let filtering = filtering_rate(report);
    let soft = report
        .verdicts
        .iter()
        .filter(|v| truth.users.get(&v.user_id) == Some(&AnomalyClass::Soft));
    Ok(RunMetrics {
        confusion: c,
        accuracy: s.accuracy,
        detection_rate: s.detection_rate,
        false_positive_rate: s.false_positive_rate,
        precision: s.precision,
        f_score: s.f_score,
        filtering_rate: filtering,
        detected_fraction,
        convergence_value: detected_fraction.map(|d| convergence_value(filtering, d)),
        users_recovered_pct: recovered_pct(&report.verdicts),
        soft_recovered_pct: recovered_pct_of(soft),
        failed: failure_flag(s.accuracy),
    })
}

/// Mean of the defined values, `None` when there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.into_iter().flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}
