//! Trust-property reputation graph.
//!
//! Every interaction between a user and a source becomes an edge carrying
//! the five property contributions `Θ · activation_d · T_s,d`. The
//! per-edge reputation gain is the normalised sum of those contributions,
//! and a user's significant difference is the population standard
//! deviation of its per-source gains.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::INPUTS;

/// Trust scores of P1..P5, in priority order.
pub const TRUST_SCORES: [f64; INPUTS] = [1.0, 0.9, 0.8, 0.7, 0.6];

/// Sum of `TRUST_SCORES`; the raw gain is divided by it so gains live on `[0, 1]`.
pub const TRUST_SCORE_TOTAL: f64 = 4.0;

/// A user–source link counts towards `k'` once its spam fraction exceeds this.
pub const SPAM_FLAG_FRACTION: f64 = 0.5;

/// A user–source link counts towards `k'` once its unauthorized-source evidence (P1) reaches this.
pub const UNAUTHORIZED_FLAG_LEVEL: f64 = 0.5;

/// Users whose significant difference exceeds this are possible anomalies.
pub const DEVIATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReputationError {
    #[error("invalid activity record for {user_id}/{source_id}: {reason}")]
    InvalidRecord {
        user_id: String,
        source_id: String,
        reason: String,
    },
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown community {0}")]
    UnknownCommunity(String),
    #[error("user {user_id} is listed in communities {first} and {second}")]
    CommunityConflict {
        user_id: String,
        first: String,
        second: String,
    },
    #[error("community {0} has no members")]
    EmptyCommunity(String),
    #[error("reputation history is empty")]
    EmptyHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrustProperty {
    P1,
    P2,
    P3,
    P4,
    P5,
}

impl TrustProperty {
    pub const ALL: [TrustProperty; INPUTS] = [Self::P1, Self::P2, Self::P3, Self::P4, Self::P5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn trust_score(self) -> f64 {
        TRUST_SCORES[self.index()]
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::P1 => "visits to an unauthorized source",
            Self::P2 => "hits on spam content",
            Self::P3 => "use of highly sensitive words",
            Self::P4 => "out-degree (requests generated)",
            Self::P5 => "excess activity on a single source",
        }
    }
}

/// Raw interaction counters and property evidence for one user–source link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub user_id: String,
    pub community_id: String,
    pub source_id: String,
    pub hits_other: u64,
    pub hits_same: u64,
    pub spam_requests: u64,
    pub total_requests: u64,
    pub activations: [f64; INPUTS],
}

impl ActivityRecord {
    pub fn validate(&self) -> Result<(), ReputationError> {
        let invalid = |reason: String| ReputationError::InvalidRecord {
            user_id: self.user_id.clone(),
            source_id: self.source_id.clone(),
            reason,
        };
        if self.spam_requests > self.total_requests {
            return Err(invalid(format!(
                "spam requests {} exceed total requests {}",
                self.spam_requests, self.total_requests
            )));
        }
        for (d, &a) in self.activations.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(invalid(format!(
                    "activation p{} = {a} outside [0, 1]",
                    d + 1
                )));
            }
        }
        Ok(())
    }

    /// `η1 / η2`, taken as 0 when there were no requests.
    pub fn spam_fraction(&self) -> f64 {
        spam_fraction(self.spam_requests, self.total_requests)
    }
}

fn spam_fraction(spam: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        spam as f64 / total as f64
    }
}

/// `H_r · γ · (1 − η1/η2)` before clamping, with `H_r = hits_other / max(hits_same, 1)`.
pub fn connectivity_raw(rec: &ActivityRecord, gamma: f64) -> f64 {
    raw_theta(
        rec.hits_other,
        rec.hits_same,
        rec.spam_requests,
        rec.total_requests,
        gamma,
    )
}

fn raw_theta(hits_other: u64, hits_same: u64, spam: u64, total: u64, gamma: f64) -> f64 {
    let hit_ratio = hits_other as f64 / hits_same.max(1) as f64;
    hit_ratio * gamma * (1.0 - spam_fraction(spam, total))
}

/// Connectivity constant Θ clamped to `[0, 1]`.
pub fn connectivity_constant(rec: &ActivityRecord, gamma: f64) -> f64 {
    connectivity_raw(rec, gamma).clamp(0.0, 1.0)
}

/// Normalised reputation gain `Σ_d Θ_d · T_s,d / Σ_d T_s,d` for per-property connectivity `theta`.
pub fn reputation_gain(theta: &[f64; INPUTS]) -> f64 {
    theta
        .iter()
        .zip(TRUST_SCORES)
        .map(|(t, s)| t * s)
        .sum::<f64>()
        / TRUST_SCORE_TOTAL
}

/// Population standard deviation of a user's per-source reputation gains.
pub fn significant_difference(history: &[f64]) -> Result<f64, ReputationError> {
    if history.is_empty() {
        return Err(ReputationError::EmptyHistory);
    }
    let k = history.len() as f64;
    let mean = history.iter().sum::<f64>() / k;
    let var = history.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / k;
    Ok(var.sqrt())
}

/// Community membership used to derive γ.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Network {
    membership: BTreeMap<String, String>,
    sizes: BTreeMap<String, usize>,
    total: usize,
}

impl Network {
    /// Builds a network from explicit `(user, community)` pairs.
    pub fn new<I, U, C>(members: I) -> Result<Self, ReputationError>
    where
        I: IntoIterator<Item = (U, C)>,
        U: Into<String>,
        C: Into<String>,
    {
        let mut net = Network::default();
        for (user, community) in members {
            net.insert(user.into(), community.into())?;
        }
        Ok(net)
    }

    /// Every user appearing in `records`, in the community the record names.
    pub fn from_records(records: &[ActivityRecord]) -> Result<Self, ReputationError> {
        let mut net = Network::default();
        for rec in records {
            net.insert(rec.user_id.clone(), rec.community_id.clone())?;
        }
        Ok(net)
    }

    /// Registers an (initially empty) community.
    pub fn add_community(&mut self, community: impl Into<String>) {
        self.sizes.entry(community.into()).or_insert(0);
    }

    fn insert(&mut self, user: String, community: String) -> Result<(), ReputationError> {
        match self.membership.get(&user) {
            Some(existing) if *existing == community => Ok(()),
            Some(existing) => Err(ReputationError::CommunityConflict {
                user_id: user.clone(),
                first: existing.clone(),
                second: community,
            }),
            None => {
                *self.sizes.entry(community.clone()).or_insert(0) += 1;
                self.total += 1;
                self.membership.insert(user, community);
                Ok(())
            }
        }
    }

    /// Drops a user from its community, e.g. after elimination.
    pub fn remove_user(&mut self, user: &str) -> bool {
        match self.membership.remove(user) {
            Some(community) => {
                if let Some(size) = self.sizes.get_mut(&community) {
                    *size -= 1;
                }
                self.total -= 1;
                true
            }
            None => false,
        }
    }

    pub fn community_of(&self, user: &str) -> Option<&str> {
        self.membership.get(user).map(String::as_str)
    }

    pub fn community_size(&self, community: &str) -> Option<usize> {
        self.sizes.get(community).copied()
    }

    pub fn contains_community(&self, community: &str) -> bool {
        self.sizes.contains_key(community)
    }

    pub fn user_count(&self) -> usize {
        self.total
    }

    pub fn communities(&self) -> impl Iterator<Item = (&str, usize)> {
        self.sizes.iter().map(|(c, &n)| (c.as_str(), n))
    }

    /// γ for members of `community`: users outside it over users inside it.
    pub fn gamma_for_community(&self, community: &str) -> Result<f64, ReputationError> {
        let inside = self
            .community_size(community)
            .ok_or_else(|| ReputationError::UnknownCommunity(community.to_string()))?;
        if inside == 0 {
            return Err(ReputationError::EmptyCommunity(community.to_string()));
        }
        Ok((self.total - inside) as f64 / inside as f64)
    }
}

/// γ for `user`: users outside its community over users inside it.
pub fn gamma_for(user: &str, network: &Network) -> Result<f64, ReputationError> {
    let community = network
        .community_of(user)
        .ok_or_else(|| ReputationError::UnknownUser(user.to_string()))?;
    network.gamma_for_community(community)
}

/// One user–source link after merging duplicate records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source_id: String,
    pub hits_other: u64,
    pub hits_same: u64,
    pub spam_requests: u64,
    pub total_requests: u64,
    pub activations: [f64; INPUTS],
    pub theta_raw: f64,
    pub theta: f64,
    pub contributions: [f64; INPUTS],
}

impl Edge {
    fn refresh(&mut self, gamma: f64) {
        self.theta_raw = raw_theta(
            self.hits_other,
            self.hits_same,
            self.spam_requests,
            self.total_requests,
            gamma,
        );
        self.theta = self.theta_raw.clamp(0.0, 1.0);
        self.contributions =
            std::array::from_fn(|d| self.theta * self.activations[d] * TRUST_SCORES[d]);
    }

    pub fn spam_fraction(&self) -> f64 {
        spam_fraction(self.spam_requests, self.total_requests)
    }

    /// Normalised reputation gain of this link.
    pub fn reputation_gain(&self) -> f64 {
        self.contributions.iter().sum::<f64>() / TRUST_SCORE_TOTAL
    }

    /// Whether the source counts as spam/illegal for this user.
    pub fn is_flagged(&self) -> bool {
        self.spam_fraction() > SPAM_FLAG_FRACTION
            || self.activations[TrustProperty::P1.index()] >= UNAUTHORIZED_FLAG_LEVEL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserNode {
    pub user_id: String,
    pub community_id: String,
    /// Sorted by source id.
    pub edges: Vec<Edge>,
}

impl UserNode {
    /// Per-source reputation gains in source-id order.
    pub fn gains(&self) -> Vec<f64> {
        self.edges.iter().map(Edge::reputation_gain).collect()
    }

    pub fn flagged_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_flagged()).count()
    }

    /// Per-property maxima over the user's links; the worst link drives suspicion.
    pub fn peak_activations(&self) -> [f64; INPUTS] {
        let mut peak = [0.0f64; INPUTS];
        for e in &self.edges {
            for (p, &a) in peak.iter_mut().zip(&e.activations) {
                *p = p.max(a);
            }
        }
        peak
    }

    pub fn state(&self) -> ReputationState {
        ReputationState::new(&self.user_id, self.gains(), self.flagged_count())
    }

    /// Removes the link to `source_id`, returning it.
    pub fn remove_edge(&mut self, source_id: &str) -> Option<Edge> {
        let pos = self
            .edges
            .binary_search_by(|e| e.source_id.as_str().cmp(source_id))
            .ok()?;
        Some(self.edges.remove(pos))
    }
}

/// Per-user reputation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationState {
    pub user_id: String,
    pub rg_history: Vec<f64>,
    pub rg_mean: f64,
    pub d_s: f64,
    pub k_prime: usize,
    pub k: usize,
}

impl ReputationState {
    pub fn new(user_id: &str, rg_history: Vec<f64>, k_prime: usize) -> Self {
        let k = rg_history.len();
        let (rg_mean, d_s) = if k == 0 {
            (0.0, 0.0)
        } else {
            let mean = rg_history.iter().sum::<f64>() / k as f64;
            (mean, significant_difference(&rg_history).unwrap_or(0.0))
        };
        Self {
            user_id: user_id.to_string(),
            rg_history,
            rg_mean,
            d_s,
            k_prime: k_prime.min(k),
            k,
        }
    }

    pub fn significant_difference(&self) -> Result<f64, ReputationError> {
        significant_difference(&self.rg_history)
    }

    pub fn is_possible_anomaly(&self) -> bool {
        self.d_s > DEVIATION_THRESHOLD
    }
}

/// Users and their merged links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationGraph {
    users: Vec<UserNode>,
}

/// Merges records into one edge per `(user, source)` and computes contributions
/// under the network's current γ.
///
/// Counters of duplicate records are summed and activations take the
/// per-property maximum, so the result does not depend on record order.
pub fn build_reputation_graph(
    records: &[ActivityRecord],
    network: &Network,
) -> Result<ReputationGraph, ReputationError> {
    let mut merged: BTreeMap<(&str, &str), (&str, Edge)> = BTreeMap::new();
    let mut seen_communities: BTreeSet<&str> = BTreeSet::new();
    for rec in records {
        rec.validate()?;
        if seen_communities.insert(&rec.community_id)
            && !network.contains_community(&rec.community_id)
        {
            return Err(ReputationError::UnknownCommunity(rec.community_id.clone()));
        }
        match network.community_of(&rec.user_id) {
            None => return Err(ReputationError::UnknownUser(rec.user_id.clone())),
            Some(c) if c != rec.community_id => {
                return Err(ReputationError::CommunityConflict {
                    user_id: rec.user_id.clone(),
                    first: c.to_string(),
                    second: rec.community_id.clone(),
                })
            }
            Some(_) => {}
        }
        let key = (rec.user_id.as_str(), rec.source_id.as_str());
        merged
            .entry(key)
            .and_modify(|(_, e)| {
                e.hits_other += rec.hits_other;
                e.hits_same += rec.hits_same;
                e.spam_requests += rec.spam_requests;
                e.total_requests += rec.total_requests;
                for d in 0..INPUTS {
                    e.activations[d] = e.activations[d].max(rec.activations[d]);
                }
            })
            .or_insert_with(|| {
                (
                    rec.community_id.as_str(),
                    Edge {
                        source_id: rec.source_id.clone(),
                        hits_other: rec.hits_other,
                        hits_same: rec.hits_same,
                        spam_requests: rec.spam_requests,
                        total_requests: rec.total_requests,
                        activations: rec.activations,
                        theta_raw: 0.0,
                        theta: 0.0,
                        contributions: [0.0; INPUTS],
                    },
                )
            });
    }

    let mut users: Vec<UserNode> = Vec::new();
    for ((user, _), (community, edge)) in merged {
        match users.last_mut() {
            Some(node) if node.user_id == user => node.edges.push(edge),
            _ => users.push(UserNode {
                user_id: user.to_string(),
                community_id: community.to_string(),
                edges: vec![edge],
            }),
        }
    }
    let mut graph = ReputationGraph { users };
    graph.refresh(network)?;
    Ok(graph)
}

impl ReputationGraph {
    /// Recomputes Θ and contributions of every edge under the network's current γ.
    pub fn refresh(&mut self, network: &Network) -> Result<(), ReputationError> {
        let mut gammas: BTreeMap<&str, f64> = BTreeMap::new();
        for node in &mut self.users {
            let gamma = match gammas.get(node.community_id.as_str()) {
                Some(&g) => g,
                None => {
                    let g = network.gamma_for_community(&node.community_id)?;
                    gammas.insert(&node.community_id, g);
                    g
                }
            };
            for e in &mut node.edges {
                e.refresh(gamma);
            }
        }
        Ok(())
    }

    pub fn users(&self) -> &[UserNode] {
        &self.users
    }

    pub fn users_mut(&mut self) -> &mut [UserNode] {
        &mut self.users
    }

    pub fn user(&self, user_id: &str) -> Option<&UserNode> {
        self.position(user_id).map(|i| &self.users[i])
    }

    pub fn user_mut(&mut self, user_id: &str) -> Option<&mut UserNode> {
        self.position(user_id).map(move |i| &mut self.users[i])
    }

    fn position(&self, user_id: &str) -> Option<usize> {
        self.users
            .binary_search_by(|n| n.user_id.as_str().cmp(user_id))
            .ok()
    }

    /// Keeps only the users for which `keep` returns true.
    pub fn retain_users(&mut self, mut keep: impl FnMut(&UserNode) -> bool) {
        self.users.retain(|n| keep(n));
    }

    pub fn edge_count(&self) -> usize {
        self.users.iter().map(|n| n.edges.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(user: &str, community: &str, source: &str) -> ActivityRecord {
        ActivityRecord {
            user_id: user.into(),
            community_id: community.into(),
            source_id: source.into(),
            hits_other: 5,
            hits_same: 5,
            spam_requests: 0,
            total_requests: 10,
            activations: [0.0; INPUTS],
        }
    }

    #[test]
    fn connectivity_examples() {
        let mut r = record("u", "c", "s");
        assert!((connectivity_constant(&r, 1.0) - 1.0).abs() < 1e-12);
        r.spam_requests = 10;
        assert_eq!(connectivity_constant(&r, 1.0), 0.0);
        let r = ActivityRecord {
            hits_other: 4,
            hits_same: 8,
            spam_requests: 2,
            total_requests: 10,
            ..record("u", "c", "s")
        };
        assert!((connectivity_constant(&r, 0.8) - 0.32).abs() < 1e-12);
    }

    #[test]
    fn connectivity_degenerate_counts() {
        let r = ActivityRecord {
            hits_other: 3,
            hits_same: 0,
            spam_requests: 0,
            total_requests: 0,
            ..record("u", "c", "s")
        };
        // H_r falls back to hits_other, spam fraction to 0
        assert!((connectivity_raw(&r, 0.5) - 1.5).abs() < 1e-12);
        assert_eq!(connectivity_constant(&r, 0.5), 1.0);
    }

    #[test]
    fn gamma_examples() {
        let members =
            (0..10).flat_map(|c| (0..100).map(move |u| (format!("u{c}_{u}"), format!("c{c}"))));
        let net = Network::new(members).unwrap();
        assert!((gamma_for("u3_7", &net).unwrap() - 9.0).abs() < 1e-12);

        let single = Network::new((0..5).map(|u| (format!("u{u}"), "c0"))).unwrap();
        assert_eq!(gamma_for("u1", &single).unwrap(), 0.0);

        let mut with_empty = single.clone();
        with_empty.add_community("ghost");
        assert!(matches!(
            with_empty.gamma_for_community("ghost"),
            Err(ReputationError::EmptyCommunity(_))
        ));
        assert!(matches!(
            gamma_for("nobody", &single),
            Err(ReputationError::UnknownUser(_))
        ));
    }

    #[test]
    fn network_removal_updates_gamma() {
        let mut net = Network::new([("a", "x"), ("b", "x"), ("c", "y"), ("d", "y")]).unwrap();
        assert_eq!(gamma_for("a", &net).unwrap(), 1.0);
        assert!(net.remove_user("c"));
        assert_eq!(gamma_for("a", &net).unwrap(), 0.5);
        assert!(!net.remove_user("c"));
        assert_eq!(net.user_count(), 3);
    }

    #[test]
    fn reputation_gain_examples() {
        assert_eq!(reputation_gain(&[0.0; 5]), 0.0);
        assert!((reputation_gain(&[1.0; 5]) - 1.0).abs() < 1e-12);
        assert!((reputation_gain(&[0.5, 0.0, 0.0, 0.0, 0.0]) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn significant_difference_examples() {
        assert!(significant_difference(&[0.4, 0.4, 0.4]).unwrap() < 1e-12);
        assert!((significant_difference(&[0.2, 0.8]).unwrap() - 0.3).abs() < 1e-12);
        assert!(matches!(
            significant_difference(&[]),
            Err(ReputationError::EmptyHistory)
        ));
    }

    #[test]
    fn single_record_graph() {
        let mut rec = record("u1", "c1", "s1");
        rec.activations = [1.0, 0.0, 0.0, 0.0, 0.0];
        let net = Network::new([("u1", "c1"), ("u2", "c2")]).unwrap();
        let g = build_reputation_graph(&[rec], &net).unwrap();
        assert_eq!(g.users().len(), 1);
        let e = &g.users()[0].edges[0];
        assert_eq!(e.theta, 1.0);
        assert_eq!(e.contributions, [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicates_merge_before_theta() {
        let net = Network::new([("u1", "c1"), ("u2", "c2")]).unwrap();
        let mut a = record("u1", "c1", "s1");
        a.hits_other = 2;
        a.hits_same = 4;
        a.spam_requests = 8;
        a.total_requests = 10;
        let mut b = record("u1", "c1", "s1");
        b.hits_other = 2;
        b.hits_same = 4;
        b.spam_requests = 0;
        b.total_requests = 10;
        b.activations[2] = 0.7;
        let g = build_reputation_graph(&[a, b], &net).unwrap();
        let e = &g.users()[0].edges[0];
        assert_eq!(g.edge_count(), 1);
        assert_eq!(
            (e.hits_other, e.hits_same, e.spam_requests, e.total_requests),
            (4, 8, 8, 20)
        );
        // γ = 1, H_r = 0.5, spam fraction = 0.4
        assert!((e.theta - 0.3).abs() < 1e-12);
        assert_eq!(e.activations[2], 0.7);
    }

    #[test]
    fn graph_build_errors() {
        let net = Network::new([("u1", "c1")]).unwrap();
        assert!(matches!(
            build_reputation_graph(&[record("u1", "nowhere", "s")], &net),
            Err(ReputationError::UnknownCommunity(_))
        ));
        assert!(matches!(
            build_reputation_graph(&[record("u9", "c1", "s")], &net),
            Err(ReputationError::UnknownUser(_))
        ));
        let mut bad = record("u1", "c1", "s");
        bad.spam_requests = 11;
        assert!(matches!(
            build_reputation_graph(&[bad], &net),
            Err(ReputationError::InvalidRecord { .. })
        ));
        assert!(Network::from_records(&[record("u1", "a", "s"), record("u1", "b", "s")]).is_err());
    }

    #[test]
    fn flagging_rule() {
        let net = Network::new([("u1", "c1"), ("u2", "c2")]).unwrap();
        let mut spam = record("u1", "c1", "s1");
        spam.spam_requests = 6;
        let mut unauthorized = record("u1", "c1", "s2");
        unauthorized.activations[0] = 0.5;
        let mut clean = record("u1", "c1", "s3");
        clean.spam_requests = 5;
        clean.activations = [0.49, 1.0, 1.0, 1.0, 1.0];
        let g = build_reputation_graph(&[spam, unauthorized, clean], &net).unwrap();
        let flags: Vec<bool> = g.users()[0].edges.iter().map(Edge::is_flagged).collect();
        assert_eq!(flags, vec![true, true, false]);
        assert_eq!(g.users()[0].state().k_prime, 2);
    }

    #[test]
    fn state_and_edge_removal() {
        let net = Network::new([("u1", "c1"), ("u2", "c2")]).unwrap();
        let mut recs = vec![record("u1", "c1", "a"), record("u1", "c1", "b")];
        recs[0].activations = [1.0; 5];
        let mut g = build_reputation_graph(&recs, &net).unwrap();
        let state = g.user("u1").unwrap().state();
        assert_eq!(state.k, 2);
        assert!((state.rg_mean - 0.5).abs() < 1e-12);
        assert!((state.d_s - 0.5).abs() < 1e-12);
        assert!(!state.is_possible_anomaly());
        assert_eq!(g.user("u1").unwrap().peak_activations(), [1.0; 5]);
        let removed = g.user_mut("u1").unwrap().remove_edge("a").unwrap();
        assert_eq!(removed.source_id, "a");
        assert_eq!(g.user("u1").unwrap().state().d_s, 0.0);
        assert!(g.user_mut("u1").unwrap().remove_edge("zzz").is_none());
    }
}
