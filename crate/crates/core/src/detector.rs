//! Iterated banding, warning and elimination over a reputation graph.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::FuzzyInferenceSystem;
use crate::healing::{
    community_healing_cost, evaluate_user, recover, CostBreakdown, HealingError, HealingThresholds,
    RecoveryOutcome,
};
use crate::metrics::RunMetrics;
use crate::reputation::{
    build_reputation_graph, ActivityRecord, Network, ReputationError, ReputationGraph,
    ReputationState,
};

pub const DEFAULT_BUDGET: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("no users to examine")]
    EmptyInput,
    #[error("iteration budget must be at least 1")]
    ZeroBudget,
    #[error("no fixed point within {budget} iterations")]
    BudgetExhausted { budget: usize },
    #[error(transparent)]
    Reputation(#[from] ReputationError),
    #[error(transparent)]
    Healing(#[from] HealingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    Safe,
    SoftAnomaly,
    HardAnomaly,
    Recovered,
    Eliminated,
}

impl Band {
    pub const ALL: [Band; 5] = [
        Band::Safe,
        Band::SoftAnomaly,
        Band::HardAnomaly,
        Band::Recovered,
        Band::Eliminated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Safe => "safe",
            Band::SoftAnomaly => "soft_anomaly",
            Band::HardAnomaly => "hard_anomaly",
            Band::Recovered => "recovered",
            Band::Eliminated => "eliminated",
        }
    }

    pub fn parse(s: &str) -> Option<Band> {
        Band::ALL.into_iter().find(|b| b.as_str() == s)
    }

    /// Bands counted as a positive (anomalous) prediction.
    pub fn is_positive(self) -> bool {
        matches!(
            self,
            Band::SoftAnomaly | Band::HardAnomaly | Band::Eliminated
        )
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Band for a freshly evaluated user.
///
/// A soft-band user whose warnings are used up comes back as `Eliminated`.
pub fn classify(costs: &CostBreakdown, warnings: u32, th: &HealingThresholds) -> Band {
    let s = costs.s_f_final;
    if s > th.hard {
        Band::HardAnomaly
    } else if s > th.safe {
        if warnings >= th.max_warnings {
            Band::Eliminated
        } else {
            Band::SoftAnomaly
        }
    } else {
        Band::Safe
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub user_id: String,
    pub community_id: String,
    pub band: Band,
    pub costs: CostBreakdown,
    /// Iteration at which `band` was assigned.
    pub iteration: usize,
    pub warnings: u32,
    /// First anomalous band the user was ever given.
    pub flagged_as: Option<Band>,
    pub terminated_sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSnapshot {
    pub iteration: usize,
    pub band_counts: BTreeMap<Band, usize>,
    pub evaluated: usize,
    pub mean_s_f_final: f64,
    pub max_s_f_final: f64,
    pub community_costs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub used: usize,
    pub budget: usize,
    pub converged: bool,
    pub snapshots: Vec<IterationSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub verdicts: Vec<Verdict>,
    pub metrics: Option<RunMetrics>,
    pub iterations: IterationSummary,
}

impl DetectionReport {
    pub fn verdict(&self, user_id: &str) -> Option<&Verdict> {
        self.verdicts
            .binary_search_by(|v| v.user_id.as_str().cmp(user_id))
            .ok()
            .map(|i| &self.verdicts[i])
    }

    pub fn count(&self, band: Band) -> usize {
        self.verdicts.iter().filter(|v| v.band == band).count()
    }

    pub fn ensure_converged(&self) -> Result<(), DetectorError> {
        if self.iterations.converged {
            Ok(())
        } else {
            Err(DetectorError::BudgetExhausted {
                budget: self.iterations.budget,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub thresholds: HealingThresholds,
    pub budget: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            thresholds: HealingThresholds::default(),
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Per-user bookkeeping carried across iterations.
#[derive(Debug, Clone)]
struct Ledger {
    band: Band,
    costs: CostBreakdown,
    iteration: usize,
    warnings: u32,
    flagged_as: Option<Band>,
    terminated: Vec<String>,
    /// Reputation histories saved each time the user was found safe.
    archive: Vec<Vec<f64>>,
}

impl Ledger {
    fn new() -> Self {
        Self {
            band: Band::Safe,
            costs: CostBreakdown::ZERO,
            iteration: 0,
            warnings: 0,
            flagged_as: None,
            terminated: Vec::new(),
            archive: Vec::new(),
        }
    }

    fn set_band(&mut self, band: Band, iteration: usize) -> bool {
        if self.band == band {
            return false;
        }
        self.band = band;
        self.iteration = iteration;
        true
    }

    fn checkpoint(&mut self, history: &[f64]) {
        if self.archive.last().map(Vec::as_slice) != Some(history) {
            self.archive.push(history.to_vec());
        }
    }
}

/// Builds the graph from `records` and runs detection to a fixed point.
pub fn run_detection(
    records: &[ActivityRecord],
    fis: &FuzzyInferenceSystem,
    cfg: &DetectorConfig,
) -> Result<DetectionReport, DetectorError> {
    if records.is_empty() {
        return Err(DetectorError::EmptyInput);
    }
    let network = Network::from_records(records)?;
    let graph = build_reputation_graph(records, &network)?;
    Detector::new(network, graph, fis, *cfg)?.run()
}

/// Stateful detection run; [`Detector::step`] performs one iteration.
pub struct Detector<'a> {
    network: Network,
    graph: ReputationGraph,
    fis: &'a FuzzyInferenceSystem,
    cfg: DetectorConfig,
    /// Aligned with `graph.users()`.
    ledgers: Vec<Ledger>,
    finished: Vec<(String, String, Ledger)>,
    snapshots: Vec<IterationSnapshot>,
    iteration: usize,
}

impl<'a> Detector<'a> {
    pub fn new(
        network: Network,
        graph: ReputationGraph,
        fis: &'a FuzzyInferenceSystem,
        cfg: DetectorConfig,
    ) -> Result<Self, DetectorError> {
        cfg.thresholds.validate()?;
        if cfg.budget == 0 {
            return Err(DetectorError::ZeroBudget);
        }
        if graph.users().is_empty() {
            return Err(DetectorError::EmptyInput);
        }
        let ledgers = vec![Ledger::new(); graph.users().len()];
        Ok(Self {
            network,
            graph,
            fis,
            cfg,
            ledgers,
            finished: Vec::new(),
            snapshots: Vec::new(),
            iteration: 0,
        })
    }

    pub fn graph(&self) -> &ReputationGraph {
        &self.graph
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Saved reputation histories of a still-monitored user.
    pub fn archive(&self, user_id: &str) -> Option<&[Vec<f64>]> {
        let idx = self
            .graph
            .users()
            .binary_search_by(|n| n.user_id.as_str().cmp(user_id))
            .ok()?;
        Some(&self.ledgers[idx].archive)
    }

    /// One evaluate-then-commit pass. Returns whether anything changed.
    pub fn step(&mut self) -> Result<bool, DetectorError> {
        self.iteration += 1;
        let it = self.iteration;
        let th = self.cfg.thresholds;
        self.graph.refresh(&self.network)?;

        let fis = self.fis;
        let evaluated: Vec<(ReputationState, CostBreakdown)> = self
            .graph
            .users()
            .par_iter()
            .map(|node| evaluate_user(node, fis))
            .collect::<Result<_, _>>()?;

        let mut community_states: BTreeMap<String, Vec<ReputationState>> = BTreeMap::new();
        let (mut sum, mut max) = (0.0f64, 0.0f64);
        for (node, (state, costs)) in self.graph.users().iter().zip(&evaluated) {
            sum += costs.s_f_final;
            max = max.max(costs.s_f_final);
            if state.k > 0 {
                community_states
                    .entry(node.community_id.clone())
                    .or_default()
                    .push(state.clone());
            }
        }
        let n_evaluated = evaluated.len();

        let mut changed = false;
        let mut eliminated = vec![false; n_evaluated];
        for (idx, (state, costs)) in evaluated.into_iter().enumerate() {
            let ledger = &mut self.ledgers[idx];
            ledger.costs = costs;
            match classify(&costs, ledger.warnings, &th) {
                band @ (Band::HardAnomaly | Band::Eliminated) => {
                    ledger.flagged_as.get_or_insert(band);
                    ledger.set_band(Band::Eliminated, it);
                    eliminated[idx] = true;
                    changed = true;
                }
                Band::SoftAnomaly => {
                    ledger.flagged_as.get_or_insert(Band::SoftAnomaly);
                    let node = &mut self.graph.users_mut()[idx];
                    let band = match recover(node, &mut ledger.warnings, fis, &th) {
                        Ok(step) => {
                            ledger.costs = step.costs;
                            ledger.terminated.push(step.removed_source);
                            match step.outcome {
                                RecoveryOutcome::Recovered => Band::Recovered,
                                RecoveryOutcome::StillWarned => Band::SoftAnomaly,
                            }
                        }
                        // an unhealable warning still counts against the user
                        Err(HealingError::NoRemovableEdge(_)) => {
                            ledger.warnings += 1;
                            Band::SoftAnomaly
                        }
                        Err(e) => return Err(e.into()),
                    };
                    ledger.set_band(band, it);
                    changed = true;
                }
                Band::Safe | Band::Recovered => {
                    ledger.checkpoint(&state.rg_history);
                    let band = if ledger.band == Band::Recovered {
                        Band::Recovered
                    } else {
                        Band::Safe
                    };
                    changed |= ledger.set_band(band, it);
                }
            }
        }

        if eliminated.iter().any(|&e| e) {
            let mut keep = Vec::with_capacity(self.ledgers.len());
            for (idx, ledger) in std::mem::take(&mut self.ledgers).into_iter().enumerate() {
                if eliminated[idx] {
                    let node = &self.graph.users()[idx];
                    self.network.remove_user(&node.user_id);
                    self.finished
                        .push((node.user_id.clone(), node.community_id.clone(), ledger));
                } else {
                    keep.push(ledger);
                }
            }
            self.ledgers = keep;
            let mut flags = eliminated.into_iter();
            self.graph.retain_users(|_| !flags.next().unwrap_or(false));
        }

        let mut band_counts: BTreeMap<Band, usize> = Band::ALL.iter().map(|&b| (b, 0)).collect();
        for l in self
            .ledgers
            .iter()
            .chain(self.finished.iter().map(|(_, _, l)| l))
        {
            *band_counts.entry(l.band).or_insert(0) += 1;
        }
        let community_costs = community_states
            .iter()
            .map(|(c, states)| Ok((c.clone(), community_healing_cost(states)?)))
            .collect::<Result<BTreeMap<_, _>, HealingError>>()?;
        self.snapshots.push(IterationSnapshot {
            iteration: it,
            band_counts,
            evaluated: n_evaluated,
            mean_s_f_final: if n_evaluated == 0 {
                0.0
            } else {
                sum / n_evaluated as f64
            },
            max_s_f_final: max,
            community_costs,
        });
        Ok(changed)
    }

    /// Steps until an iteration changes nothing or the budget runs out.
    pub fn run(mut self) -> Result<DetectionReport, DetectorError> {
        let mut converged = false;
        while self.iteration < self.cfg.budget {
            if !self.step()? {
                converged = true;
                break;
            }
            if self.graph.users().is_empty() {
                converged = true;
                break;
            }
        }
        Ok(self.into_report(converged))
    }

    fn into_report(self, converged: bool) -> DetectionReport {
        let mut verdicts: Vec<Verdict> = self
            .graph
            .users()
            .iter()
            .map(|n| (n.user_id.clone(), n.community_id.clone()))
            .zip(self.ledgers)
            .chain(self.finished.into_iter().map(|(u, c, l)| ((u, c), l)))
            .map(|((user_id, community_id), l)| Verdict {
                user_id,
                community_id,
                band: l.band,
                costs: l.costs,
                iteration: l.iteration,
                warnings: l.warnings,
                flagged_as: l.flagged_as,
                terminated_sources: l.terminated,
            })
            .collect();
        verdicts.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        DetectionReport {
            config: serde_json::to_value(self.cfg).unwrap_or(serde_json::Value::Null),
            seed: None,
            verdicts,
            metrics: None,
            iterations: IterationSummary {
                used: self.iteration,
                budget: self.cfg.budget,
                converged,
                snapshots: self.snapshots,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::build_default_fis;

    fn costs(s: f64) -> CostBreakdown {
        CostBreakdown {
            s_f_final: s,
            ..CostBreakdown::ZERO
        }
    }

    fn rec(user: &str, community: &str, source: &str, acts: [f64; 5], spam: u64) -> ActivityRecord {
        ActivityRecord {
            user_id: user.into(),
            community_id: community.into(),
            source_id: source.into(),
            hits_other: 10,
            hits_same: 5,
            spam_requests: spam,
            total_requests: 100,
            activations: acts,
        }
    }

    const LOW: [f64; 5] = [0.1; 5];
    const HIGH: [f64; 5] = [0.98; 5];

    /// Benign users in two communities, each with two quiet links.
    fn benign(n: usize) -> Vec<ActivityRecord> {
        (0..n)
            .flat_map(|i| {
                let c = if i % 2 == 0 { "c0" } else { "c1" };
                let u = format!("u{i:03}");
                vec![rec(&u, c, "s0", LOW, 0), rec(&u, c, "s1", LOW, 0)]
            })
            .collect()
    }

    #[test]
    fn classify_bands() {
        let th = HealingThresholds::default();
        assert_eq!(classify(&costs(0.75), 0, &th), Band::HardAnomaly);
        assert_eq!(classify(&costs(0.60), 0, &th), Band::SoftAnomaly);
        assert_eq!(classify(&costs(0.30), 0, &th), Band::Safe);
    }

    #[test]
    fn classify_boundaries() {
        let th = HealingThresholds::default();
        assert_eq!(classify(&costs(0.5), 0, &th), Band::Safe);
        assert_eq!(classify(&costs(0.7), 0, &th), Band::SoftAnomaly);
        assert_eq!(classify(&costs(0.5 + 1e-12), 0, &th), Band::SoftAnomaly);
        assert_eq!(classify(&costs(0.7 + 1e-12), 0, &th), Band::HardAnomaly);
        assert_eq!(classify(&costs(0.6), 3, &th), Band::Eliminated);
        assert_eq!(classify(&costs(0.3), 3, &th), Band::Safe);
    }

    #[test]
    fn benign_network_converges_at_once() {
        let fis = build_default_fis();
        let report = run_detection(&benign(20), &fis, &DetectorConfig::default()).unwrap();
        assert_eq!(report.iterations.used, 1);
        assert!(report.iterations.converged);
        assert_eq!(report.count(Band::Safe), 20);
        assert_eq!(report.verdicts.len(), 20);
    }

    #[test]
    fn all_high_user_is_eliminated_in_first_iteration() {
        let fis = build_default_fis();
        let mut records = benign(10);
        let loud = |source: &str| ActivityRecord {
            hits_other: 100,
            hits_same: 1,
            ..rec("x", "c0", source, HIGH, 60)
        };
        records.push(loud("a0"));
        records.push(loud("a1"));
        records.push(ActivityRecord {
            hits_other: 0,
            ..rec("x", "c0", "b0", LOW, 0)
        });
        let report = run_detection(&records, &fis, &DetectorConfig::default()).unwrap();
        let v = report.verdict("x").unwrap();
        assert_eq!(v.band, Band::Eliminated);
        assert_eq!(v.iteration, 1);
        assert_eq!(v.flagged_as, Some(Band::HardAnomaly));
        assert!(v.costs.s_f_final > 0.7);
        assert_eq!(report.count(Band::Safe), 10);
    }

    #[test]
    fn zero_budget_rejected() {
        let fis = build_default_fis();
        let cfg = DetectorConfig {
            budget: 0,
            ..DetectorConfig::default()
        };
        assert_eq!(
            run_detection(&benign(2), &fis, &cfg),
            Err(DetectorError::ZeroBudget)
        );
        assert_eq!(
            run_detection(&[], &fis, &DetectorConfig::default()),
            Err(DetectorError::EmptyInput)
        );
    }

    #[test]
    fn safe_users_are_checkpointed() {
        let fis = build_default_fis();
        let records = benign(4);
        let network = Network::from_records(&records).unwrap();
        let graph = build_reputation_graph(&records, &network).unwrap();
        let mut det = Detector::new(network, graph, &fis, DetectorConfig::default()).unwrap();
        assert!(!det.step().unwrap());
        assert!(!det.step().unwrap());
        assert_eq!(det.archive("u000").unwrap().len(), 1);
    }
}
