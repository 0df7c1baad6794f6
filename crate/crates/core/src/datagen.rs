//! Labeled synthetic networks with injected soft and hard anomalies.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::INPUTS;
use crate::ingest::TrafficRecord;
use crate::metrics::{AnomalyClass, GroundTruth, LabelRow};
use crate::reputation::ActivityRecord;

/// Upper bound on the injected anomaly fraction.
pub const MAX_ANOMALY_FRACTION: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_communities: usize,
    /// Poisson mean of users per community.
    pub lambda: f64,
    /// Poisson mean of the source count.
    pub source_lambda: f64,
    /// Inclusive range of links per benign user.
    pub connections_per_user: (usize, usize),
    pub anomaly_fraction: f64,
    pub active_user_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_communities: 10,
            lambda: 100.0,
            source_lambda: 100.0,
            connections_per_user: (1, 10),
            anomaly_fraction: 0.1,
            active_user_fraction: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::InvalidConfig(m));
        if self.n_communities == 0 {
            return bad("n_communities must be at least 1".into());
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.source_lambda.is_finite() && self.source_lambda > 0.0) {
            return bad(format!(
                "source_lambda must be positive, got {}",
                self.source_lambda
            ));
        }
        let (lo, hi) = self.connections_per_user;
        if lo == 0 || lo > hi {
            return bad(format!(
                "connections_per_user must satisfy 1 <= lo <= hi, got {lo}..{hi}"
            ));
        }
        if !(0.0..=MAX_ANOMALY_FRACTION).contains(&self.anomaly_fraction) {
            return bad(format!(
                "anomaly_fraction must lie in [0, {MAX_ANOMALY_FRACTION}], got {}",
                self.anomaly_fraction
            ));
        }
        if !(self.active_user_fraction > 0.0 && self.active_user_fraction <= 1.0) {
            return bad(format!(
                "active_user_fraction must lie in (0, 1], got {}",
                self.active_user_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledNetwork {
    pub communities: Vec<String>,
    /// `(user, community)` for every active user.
    pub users: Vec<(String, String)>,
    pub sources: Vec<String>,
    pub records: Vec<ActivityRecord>,
    pub labels: Vec<LabelRow>,
}

impl LabeledNetwork {
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth::from_labels(&self.labels).expect("generator labels are consistent")
    }

    pub fn flagged_sources(&self) -> usize {
        self.labels
            .iter()
            .filter(|l| l.user_id.is_empty() && l.is_anomaly)
            .count()
    }

    pub fn class_count(&self, class: AnomalyClass) -> usize {
        self.ground_truth()
            .users
            .values()
            .filter(|&&c| c == class)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LinkKind {
    Benign,
    Hard,
    Soft,
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    Poisson::new(mean).expect("validated mean").sample(rng) as u64
}

fn link(
    rng: &mut ChaCha8Rng,
    kind: LinkKind,
    user: &str,
    community: &str,
    source: &str,
) -> ActivityRecord {
    let total_requests = rng.random_range(20..=200u64);
    let mut activations = [0.0; INPUTS];
    let (hits_other, hits_same, spam_requests) = match kind {
        LinkKind::Benign => {
            for a in &mut activations {
                *a = rng.random_range(0.0..=0.4);
            }
            let hits_other = if rng.random_bool(0.8) { 0 } else { 1 };
            let spam = rng.random_range(0..=total_requests / 10);
            (hits_other, rng.random_range(60..=160u64), spam)
        }
        LinkKind::Hard | LinkKind::Soft => {
            for a in &mut activations[..3] {
                *a = rng.random_range(0.96..=1.0);
            }
            let spam_share = if kind == LinkKind::Hard {
                activations[3] = rng.random_range(0.96..=1.0);
                activations[4] = rng.random_range(0.96..=1.0);
                rng.random_range(0.6..=0.8)
            } else {
                activations[3] = rng.random_range(0.55..=0.65);
                activations[4] = rng.random_range(0.5..=0.6);
                rng.random_range(0.3..=0.5)
            };
            let spam = ((spam_share * total_requests as f64).round() as u64).min(total_requests);
            (
                rng.random_range(80..=200u64),
                rng.random_range(1..=8u64),
                spam,
            )
        }
    };
    ActivityRecord {
        user_id: user.to_string(),
        community_id: community.to_string(),
        source_id: source.to_string(),
        hits_other,
        hits_same,
        spam_requests,
        total_requests,
        activations,
    }
}

/// Draws `n` distinct items from `pool`, excluding `taken`, as far as the pool allows.
fn pick<'p>(
    rng: &mut ChaCha8Rng,
    pool: &'p [String],
    n: usize,
    taken: &mut BTreeSet<&'p str>,
) -> Vec<&'p str> {
    let free: Vec<&str> = pool
        .iter()
        .map(String::as_str)
        .filter(|s| !taken.contains(s))
        .collect();
    let chosen: Vec<&str> = free
        .choose_multiple(rng, n.min(free.len()))
        .copied()
        .collect();
    taken.extend(chosen.iter().copied());
    chosen
}

pub fn generate(config: &SyntheticConfig) -> Result<LabeledNetwork, DatagenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let communities: Vec<String> = (0..config.n_communities)
        .map(|c| format!("c{c:03}"))
        .collect();
    let mut users = Vec::new();
    for community in &communities {
        for _ in 0..poisson(&mut rng, config.lambda) {
            if rng.random_bool(config.active_user_fraction) {
                users.push((format!("u{:06}", users.len()), community.clone()));
            }
        }
    }
    let n_sources = poisson(&mut rng, config.source_lambda).max(1) as usize;
    let sources: Vec<String> = (0..n_sources).map(|s| format!("s{s:04}")).collect();

    let n_flagged = (config.anomaly_fraction * n_sources as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_sources).collect();
    order.shuffle(&mut rng);
    let flagged_set: BTreeSet<usize> = order[..n_flagged].iter().copied().collect();
    let flagged: Vec<String> = flagged_set.iter().map(|&i| sources[i].clone()).collect();
    let clean: Vec<String> = if flagged.len() == sources.len() {
        sources.clone()
    } else {
        (0..n_sources)
            .filter(|i| !flagged_set.contains(i))
            .map(|i| sources[i].clone())
            .collect()
    };

    // One injected user per flagged source, alternating hard and soft.
    let mut user_order: Vec<usize> = (0..users.len()).collect();
    user_order.shuffle(&mut rng);
    let mut class = vec![AnomalyClass::Benign; users.len()];
    let mut owned: Vec<Option<usize>> = vec![None; users.len()];
    for (i, &u) in user_order.iter().take(n_flagged).enumerate() {
        class[u] = if i % 2 == 0 {
            AnomalyClass::Hard
        } else {
            AnomalyClass::Soft
        };
        owned[u] = Some(i);
    }

    let (lo, hi) = config.connections_per_user;
    let mut records = Vec::new();
    let mut labels = Vec::new();
    for (idx, (user, community)) in users.iter().enumerate() {
        let (k, n_anomalous, kind) = match class[idx] {
            AnomalyClass::Benign => (rng.random_range(lo..=hi), 0, LinkKind::Benign),
            AnomalyClass::Hard => {
                let k: usize = rng.random_range(3..=10);
                let n = ((0.7 * k as f64).round() as usize).clamp(2, k - 1);
                (k, n, LinkKind::Hard)
            }
            AnomalyClass::Soft => {
                let k: usize = rng.random_range(2..=6);
                // besides its own source, each link lands on a flagged one with the anomaly odds
                let spread = 1
                    + (1..k)
                        .filter(|_| rng.random_bool(config.anomaly_fraction))
                        .count();
                (k, k.div_ceil(2).max(spread), LinkKind::Soft)
            }
        };
        let mut taken = BTreeSet::new();
        let mut anomalous: Vec<&str> = Vec::new();
        if let Some(i) = owned[idx] {
            let own = sources[order[i]].as_str();
            taken.insert(own);
            anomalous.push(own);
            anomalous.extend(pick(&mut rng, &flagged, n_anomalous - 1, &mut taken));
        }
        let benign = pick(&mut rng, &clean, k - anomalous.len(), &mut taken);
        for s in &anomalous {
            records.push(link(&mut rng, kind, user, community, s));
            labels.push(LabelRow {
                user_id: user.clone(),
                source_id: s.to_string(),
                is_anomaly: true,
                class: class[idx],
            });
        }
        for s in benign {
            records.push(link(&mut rng, LinkKind::Benign, user, community, s));
            labels.push(LabelRow {
                user_id: user.clone(),
                source_id: s.to_string(),
                is_anomaly: false,
                class: class[idx],
            });
        }
    }

    let mut owner_class = vec![AnomalyClass::Benign; n_sources];
    for (idx, o) in owned.iter().enumerate() {
        if let Some(i) = o {
            owner_class[order[*i]] = class[idx];
        }
    }
    for (i, s) in sources.iter().enumerate() {
        labels.push(LabelRow {
            user_id: String::new(),
            source_id: s.clone(),
            is_anomaly: flagged_set.contains(&i),
            class: owner_class[i],
        });
    }

    // users without links never appear in the activity data
    let linked: BTreeSet<&str> = records.iter().map(|r| r.user_id.as_str()).collect();
    let users: Vec<(String, String)> = users
        .iter()
        .filter(|(u, _)| linked.contains(u.as_str()))
        .cloned()
        .collect();
    labels.retain(|l| l.user_id.is_empty() || linked.contains(l.user_id.as_str()));

    Ok(LabeledNetwork {
        communities,
        users,
        sources,
        records,
        labels,
    })
}

/// Shape of a synthetic flow capture with injected exfiltration rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    pub rows: usize,
    pub subnets: usize,
    pub attackers: usize,
    /// Injected rows per attacker, each to a distinct external host.
    pub injected_per_attacker: usize,
    pub external_hosts: usize,
    pub seed: u64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            rows: 10_000,
            subnets: 10,
            attackers: 20,
            injected_per_attacker: 5,
            external_hosts: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficCapture {
    pub records: Vec<TrafficRecord>,
    /// Aligned with `records`.
    pub injected: Vec<bool>,
    /// Allow-list covering every internal address.
    pub allow: Vec<String>,
}

const BENIGN_ROWS_PER_ATTACKER: usize = 2;
const HOSTS_PER_SUBNET: usize = 199;
const SERVERS_PER_SUBNET: usize = 8;

/// Internal users talk to servers of their own subnet; attackers additionally
/// push spam-laden, bursty flows to external hosts.
pub fn generate_traffic(config: &TrafficConfig) -> Result<TrafficCapture, DatagenError> {
    let bad = |m: String| Err(DatagenError::InvalidConfig(m));
    if config.subnets == 0 || config.subnets > 250 {
        return bad(format!(
            "subnets must lie in 1..=250, got {}",
            config.subnets
        ));
    }
    if config.injected_per_attacker > config.external_hosts {
        return bad("injected_per_attacker exceeds external_hosts".into());
    }
    let attack_rows = config.attackers * (config.injected_per_attacker + BENIGN_ROWS_PER_ATTACKER);
    if attack_rows > config.rows {
        return bad(format!(
            "{attack_rows} attacker rows exceed the {} requested",
            config.rows
        ));
    }
    if config.attackers > config.subnets * (254 - HOSTS_PER_SUBNET) {
        return bad("too many attackers for the address plan".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let server = |s: usize, k: usize| format!("10.{s}.0.{}", k + 1);
    let externals: Vec<String> = (0..config.external_hosts)
        .map(|k| format!("203.0.113.{}", k + 1))
        .collect();

    let benign_flow = |rng: &mut ChaCha8Rng, src: &str, dst: &str| {
        let packets = rng.random_range(10..=500u64);
        TrafficRecord {
            source_address: src.to_string(),
            destination_address: dst.to_string(),
            packet_count: packets,
            byte_count: packets * rng.random_range(60..=1500u64),
            burst_rate: rng.random_range(0.1..=2.0),
            length_bucket: rng.random_range(1..=5),
            spam_packets: rng.random_range(0..=packets / 50),
            sensitive_tokens: rng.random_range(0..=packets / 50),
        }
    };

    let mut rows: Vec<(TrafficRecord, bool)> = Vec::with_capacity(config.rows);
    for j in 0..config.attackers {
        let s = j % config.subnets;
        let src = format!("10.{s}.1.{}", HOSTS_PER_SUBNET + 1 + j / config.subnets);
        for dst in externals.choose_multiple(&mut rng, config.injected_per_attacker) {
            let packets = rng.random_range(200..=800u64);
            let spam = (rng.random_range(0.955..=0.985) * packets as f64).round() as u64;
            let sensitive = (rng.random_range(0.97..=1.0) * packets as f64).round() as u64;
            rows.push((
                TrafficRecord {
                    source_address: src.clone(),
                    destination_address: dst.clone(),
                    packet_count: packets,
                    byte_count: packets * rng.random_range(60..=200u64),
                    burst_rate: rng.random_range(4.8..=5.0),
                    length_bucket: 5,
                    spam_packets: spam.min(packets),
                    sensitive_tokens: sensitive,
                },
                true,
            ));
        }
        for k in rand::seq::index::sample(&mut rng, SERVERS_PER_SUBNET, BENIGN_ROWS_PER_ATTACKER) {
            rows.push((benign_flow(&mut rng, &src, &server(s, k)), false));
        }
    }

    let mut user = 0usize;
    'fill: while rows.len() < config.rows {
        let s = user % config.subnets;
        let host = 1 + user / config.subnets;
        if host > HOSTS_PER_SUBNET {
            return bad(format!("{} rows do not fit the address plan", config.rows));
        }
        let src = format!("10.{s}.1.{host}");
        let n_dest = rng.random_range(1..=6);
        for k in rand::seq::index::sample(&mut rng, SERVERS_PER_SUBNET, n_dest) {
            for _ in 0..rng.random_range(1..=3) {
                if rows.len() == config.rows {
                    break 'fill;
                }
                rows.push((benign_flow(&mut rng, &src, &server(s, k)), false));
            }
        }
        user += 1;
    }
    rows.shuffle(&mut rng);
    let (records, injected) = rows.into_iter().unzip();
    Ok(TrafficCapture {
        records,
        injected,
        allow: vec!["10.*".to_string()],
    })
}
