//! Self-healing costs and the edge-termination recovery step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::{FuzzyError, FuzzyInferenceSystem};
use crate::reputation::{ReputationState, UserNode, DEVIATION_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HealingError {
    #[error("community has no users")]
    EmptyCommunity,
    #[error("user {0} has no reputation history")]
    EmptyHistory(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("user {0} has no spam-flagged link left to terminate")]
    NoRemovableEdge(String),
    #[error("user {user_id} already used {warnings} warnings")]
    WarningsExhausted { user_id: String, warnings: u32 },
    #[error("user {user_id} is not a soft anomaly (final cost {cost})")]
    NotSoftAnomaly { user_id: String, cost: f64 },
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HealingThresholds {
    /// At or below: safe.
    pub safe: f64,
    /// Above: hard anomaly, eliminated outright.
    pub hard: f64,
    pub max_warnings: u32,
}

impl Default for HealingThresholds {
    fn default() -> Self {
        Self {
            safe: 0.5,
            hard: 0.7,
            max_warnings: 3,
        }
    }
}

impl HealingThresholds {
    pub fn new(safe: f64, hard: f64, max_warnings: u32) -> Result<Self, HealingError> {
        let th = Self {
            safe,
            hard,
            max_warnings,
        };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<(), HealingError> {
        if !(self.safe > 0.0 && self.safe < self.hard && self.hard <= 1.0) {
            return Err(HealingError::InvalidThresholds(format!(
                "need 0 < safe < hard <= 1, got safe={} hard={}",
                self.safe, self.hard
            )));
        }
        if self.max_warnings == 0 {
            return Err(HealingError::InvalidThresholds(
                "max_warnings must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Unnormalised healing cost of the user taken as a one-member community.
    pub s_f_raw: f64,
    pub s_f_user: f64,
    pub c_g_crisp: f64,
    pub s_f_final: f64,
}

impl CostBreakdown {
    pub const ZERO: CostBreakdown = CostBreakdown {
        s_f_raw: 0.0,
        s_f_user: 0.0,
        c_g_crisp: 0.0,
        s_f_final: 0.0,
    };
}

/// `Σ_i e^{D_s(i)} + sqrt(Σ_i k'_i² / m)` over the users of one community.
pub fn community_healing_cost(states: &[ReputationState]) -> Result<f64, HealingError> {
    if states.is_empty() {
        return Err(HealingError::EmptyCommunity);
    }
    let m = states.len() as f64;
    let exp_sum: f64 = states.iter().map(|s| s.d_s.exp()).sum();
    let spam_sq: f64 = states.iter().map(|s| (s.k_prime as f64).powi(2)).sum();
    Ok(exp_sum + (spam_sq / m).sqrt())
}

/// Per-user cost on `[0, 1]`: equal-weight blend of the deviation term,
/// saturating at `D_s = 0.5`, and the spam-source share `k'/K`.
pub fn user_healing_cost(state: &ReputationState) -> Result<f64, HealingError> {
    if state.k == 0 {
        return Err(HealingError::EmptyHistory(state.user_id.clone()));
    }
    let deviation = (state.d_s.exp() - 1.0) / (DEVIATION_THRESHOLD.exp() - 1.0);
    let spam_share = state.k_prime as f64 / state.k as f64;
    Ok((0.5 * deviation + 0.5 * spam_share).clamp(0.0, 1.0))
}

pub fn final_cost(s_f_user: f64, c_g_crisp: f64) -> f64 {
    s_f_user * c_g_crisp
}

/// Reputation state and full cost breakdown of one user.
///
/// A user with no links left carries zero cost.
pub fn evaluate_user(
    node: &UserNode,
    fis: &FuzzyInferenceSystem,
) -> Result<(ReputationState, CostBreakdown), HealingError> {
    let state = node.state();
    if state.k == 0 {
        return Ok((state, CostBreakdown::ZERO));
    }
    let s_f_user = user_healing_cost(&state)?;
    let c_g_crisp = fis.crisp(&node.peak_activations())?;
    let s_f_raw = state.d_s.exp() + state.k_prime as f64;
    let costs = CostBreakdown {
        s_f_raw,
        s_f_user,
        c_g_crisp,
        s_f_final: final_cost(s_f_user, c_g_crisp),
    };
    Ok((state, costs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryOutcome {
    Recovered,
    StillWarned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryStep {
    pub removed_source: String,
    pub outcome: RecoveryOutcome,
    pub state: ReputationState,
    pub costs: CostBreakdown,
    pub warnings: u32,
}

/// One warning-and-heal round for a soft anomaly.
///
/// Terminates the user's single worst spam-flagged link (largest reputation
/// gain; ties go to the lowest source id), recomputes the costs and bumps the
/// warning count. Nothing is modified when an error is returned.
pub fn recover(
    node: &mut UserNode,
    warnings: &mut u32,
    fis: &FuzzyInferenceSystem,
    th: &HealingThresholds,
) -> Result<RecoveryStep, HealingError> {
    if *warnings >= th.max_warnings {
        return Err(HealingError::WarningsExhausted {
            user_id: node.user_id.clone(),
            warnings: *warnings,
        });
    }
    let (_, before) = evaluate_user(node, fis)?;
    if before.s_f_final <= th.safe || before.s_f_final > th.hard {
        return Err(HealingError::NotSoftAnomaly {
            user_id: node.user_id.clone(),
            cost: before.s_f_final,
        });
    }
    let worst = node
        .edges
        .iter()
        .filter(|e| e.is_flagged())
        .fold(None::<(&str, f64)>, |best, e| {
            let gain = e.reputation_gain();
            match best {
                // edges are sorted by source id, so strict > keeps the lowest id on ties
                Some((_, g)) if gain <= g => best,
                _ => Some((e.source_id.as_str(), gain)),
            }
        })
        .map(|(id, _)| id.to_string())
        .ok_or_else(|| HealingError::NoRemovableEdge(node.user_id.clone()))?;

    let removed = node
        .remove_edge(&worst)
        .expect("edge selected from this node");
    let (state, costs) = match evaluate_user(node, fis) {
        Ok(v) => v,
        Err(e) => {
            let pos = node
                .edges
                .partition_point(|x| x.source_id < removed.source_id);
            node.edges.insert(pos, removed);
            return Err(e);
        }
    };
    *warnings += 1;
    let outcome = if costs.s_f_final <= th.safe {
        RecoveryOutcome::Recovered
    } else {
        RecoveryOutcome::StillWarned
    };
    Ok(RecoveryStep {
        removed_source: worst,
        outcome,
        state,
        costs,
        warnings: *warnings,
    })
}
