use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{field, IngestError};
use crate::detector::DetectionReport;
use crate::fuzzy::INPUTS;
use crate::reputation::ActivityRecord;

/// Required columns; `spam_packets` and `sensitive_tokens` may follow.
pub const TRAFFIC_HEADER: [&str; 6] = [
    "source_address",
    "destination_address",
    "packet_count",
    "byte_count",
    "burst_rate",
    "length_bucket",
];

const OPTIONAL: [&str; 2] = ["spam_packets", "sensitive_tokens"];

/// One summarised flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficRecord {
    pub source_address: String,
    pub destination_address: String,
    pub packet_count: u64,
    pub byte_count: u64,
    pub burst_rate: f64,
    pub length_bucket: u32,
    pub spam_packets: u64,
    pub sensitive_tokens: u64,
}

pub fn read_traffic<R: Read>(input: R) -> Result<Vec<TrafficRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let n = cols.len();
    let ok = n >= TRAFFIC_HEADER.len()
        && n <= TRAFFIC_HEADER.len() + OPTIONAL.len()
        && cols[..6] == TRAFFIC_HEADER
        && cols[6..] == OPTIONAL[..n - 6];
    if !ok {
        let mut expected = TRAFFIC_HEADER.join(",");
        expected.push_str("[,spam_packets[,sensitive_tokens]]");
        return Err(IngestError::SchemaMismatch {
            expected,
            found: cols.join(","),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != n {
            return Err(IngestError::ParseError {
                row,
                message: format!("expected {n} fields, found {}", rec.len()),
            });
        }
        let r = TrafficRecord {
            source_address: rec[0].to_string(),
            destination_address: rec[1].to_string(),
            packet_count: field(&rec, 2, "packet_count", row)?,
            byte_count: field(&rec, 3, "byte_count", row)?,
            burst_rate: field(&rec, 4, "burst_rate", row)?,
            length_bucket: field(&rec, 5, "length_bucket", row)?,
            spam_packets: if n > 6 {
                field(&rec, 6, "spam_packets", row)?
            } else {
                0
            },
            sensitive_tokens: if n > 7 {
                field(&rec, 7, "sensitive_tokens", row)?
            } else {
                0
            },
        };
        if !(r.burst_rate.is_finite() && r.burst_rate >= 0.0) {
            return Err(IngestError::ParseError {
                row,
                message: format!("burst_rate must be finite and >= 0, got {}", r.burst_rate),
            });
        }
        if r.spam_packets > r.packet_count {
            return Err(IngestError::ParseError {
                row,
                message: "spam_packets exceed packet_count".into(),
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn parse_traffic_csv(path: impl AsRef<Path>) -> Result<Vec<TrafficRecord>, IngestError> {
    read_traffic(File::open(path)?)
}

pub fn write_traffic_csv(
    path: impl AsRef<Path>,
    records: &[TrafficRecord],
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let mut header = TRAFFIC_HEADER.to_vec();
    header.extend(OPTIONAL);
    w.write_record(&header)?;
    for r in records {
        w.write_record([
            r.source_address.clone(),
            r.destination_address.clone(),
            r.packet_count.to_string(),
            r.byte_count.to_string(),
            r.burst_rate.to_string(),
            r.length_bucket.to_string(),
            r.spam_packets.to_string(),
            r.sensitive_tokens.to_string(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| IngestError::IoError(e.to_string()))?
        .flush()?;
    Ok(())
}

/// Raw per-link quantities a trust property can be read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// Share of the user's destinations outside the allow-list.
    Unauthorized,
    SpamFraction,
    /// Sensitive tokens per packet.
    SensitiveRate,
    /// Distinct destinations of the user.
    OutDegree,
    BurstRate,
    PacketCount,
    ByteCount,
    LengthBucket,
}

impl Feature {
    const NAMES: [(&'static str, Feature); 8] = [
        ("unauthorized", Feature::Unauthorized),
        ("spam_fraction", Feature::SpamFraction),
        ("sensitive_rate", Feature::SensitiveRate),
        ("out_degree", Feature::OutDegree),
        ("burst_rate", Feature::BurstRate),
        ("packet_count", Feature::PacketCount),
        ("byte_count", Feature::ByteCount),
        ("length_bucket", Feature::LengthBucket),
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES
            .iter()
            .find(|(_, f)| *f == self)
            .map(|(n, _)| *n)
            .unwrap_or("?")
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::NAMES
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, f)| *f)
            .ok_or_else(|| format!("unknown feature {s:?}"))
    }
}

/// Feature plus min–max bounds; a missing bound is taken from the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyRule {
    pub feature: Feature,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl PropertyRule {
    pub fn new(feature: Feature, min: Option<f64>, max: Option<f64>) -> Self {
        Self { feature, min, max }
    }

    /// Min–max scaling clamped to `[0, 1]`. Non-decreasing in `v`.
    pub fn normalize(&self, v: f64, min: f64, max: f64) -> f64 {
        if max > min {
            ((v - min) / (max - min)).clamp(0.0, 1.0)
        } else if v > min {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyMapping {
    pub rules: [Option<PropertyRule>; INPUTS],
    /// Allowed destinations; a trailing `*` matches by prefix.
    pub allow: Vec<String>,
}

impl Default for PropertyMapping {
    fn default() -> Self {
        Self {
            rules: [
                Some(PropertyRule::new(
                    Feature::Unauthorized,
                    Some(0.0),
                    Some(1.0),
                )),
                Some(PropertyRule::new(
                    Feature::SpamFraction,
                    Some(0.0),
                    Some(1.0),
                )),
                Some(PropertyRule::new(
                    Feature::SensitiveRate,
                    Some(0.0),
                    Some(1.0),
                )),
                Some(PropertyRule::new(Feature::OutDegree, None, None)),
                Some(PropertyRule::new(Feature::BurstRate, None, None)),
            ],
            allow: Vec::new(),
        }
    }
}

impl PropertyMapping {
    pub fn is_allowed(&self, destination: &str) -> bool {
        self.allow.iter().any(|a| match a.strip_suffix('*') {
            Some(prefix) => destination.starts_with(prefix),
            None => destination == a,
        })
    }

    pub fn validate(&self) -> Result<[PropertyRule; INPUTS], IngestError> {
        let mut out = [PropertyRule::new(Feature::Unauthorized, None, None); INPUTS];
        for (d, r) in self.rules.iter().enumerate() {
            out[d] = r.ok_or(IngestError::UnmappedProperty(d + 1))?;
        }
        Ok(out)
    }
}

/// Parses `p<i> = <feature> [min] [max]` and `allow = <dest>[, <dest>...]` lines.
pub fn parse_mapping(text: &str) -> Result<PropertyMapping, IngestError> {
    let mut mapping = PropertyMapping {
        rules: [None; INPUTS],
        allow: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| IngestError::MappingError { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "allow" {
            mapping.allow.extend(
                value
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(str::to_string),
            );
            continue;
        }
        let d = key
            .strip_prefix('p')
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| (1..=INPUTS).contains(n))
            .ok_or_else(|| err(format!("unknown key {key:?}")))?;
        let mut parts = value.split_whitespace();
        let feature: Feature = parts
            .next()
            .ok_or_else(|| err("missing feature".into()))?
            .parse()
            .map_err(err)?;
        let mut bound = |name: &str| -> Result<Option<f64>, IngestError> {
            parts
                .next()
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(format!("bad {name} bound {s:?}")))
                })
                .transpose()
        };
        let min = bound("min")?;
        let max = bound("max")?;
        if parts.next().is_some() {
            return Err(err("too many values".into()));
        }
        if let (Some(lo), Some(hi)) = (min, max) {
            if lo > hi {
                return Err(err(format!("min {lo} exceeds max {hi}")));
            }
        }
        mapping.rules[d - 1] = Some(PropertyRule::new(feature, min, max));
    }
    Ok(mapping)
}

pub fn load_mapping(path: impl AsRef<Path>) -> Result<PropertyMapping, IngestError> {
    parse_mapping(&std::fs::read_to_string(path)?)
}

/// Community of an address: everything before its last `.`.
fn community_of(address: &str) -> &str {
    address.rsplit_once('.').map(|(c, _)| c).unwrap_or(address)
}

#[derive(Debug, Default, Clone)]
struct Pair {
    packets: u64,
    bytes: u64,
    spam: u64,
    sensitive: u64,
    burst: f64,
    length: u32,
}

/// Turns flows into activity records, one per `(source address, destination)`.
///
/// The source address is the user and its community is the address prefix.
/// Hit counters count packets other users sent to the same destination, split
/// by whether they share the user's community.
pub fn map_traffic_records(
    records: &[TrafficRecord],
    mapping: &PropertyMapping,
) -> Result<Vec<ActivityRecord>, IngestError> {
    let rules = mapping.validate()?;

    let mut pairs: BTreeMap<(&str, &str), Pair> = BTreeMap::new();
    for r in records {
        let p = pairs
            .entry((r.source_address.as_str(), r.destination_address.as_str()))
            .or_default();
        p.packets += r.packet_count;
        p.bytes += r.byte_count;
        p.spam += r.spam_packets;
        p.sensitive += r.sensitive_tokens;
        p.burst = p.burst.max(r.burst_rate);
        p.length = p.length.max(r.length_bucket);
    }

    let mut dest_by_community: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    let mut dest_total: BTreeMap<&str, u64> = BTreeMap::new();
    let mut degree: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (&(user, dst), p) in &pairs {
        *dest_by_community
            .entry(dst)
            .or_default()
            .entry(community_of(user))
            .or_insert(0) += p.packets;
        *dest_total.entry(dst).or_insert(0) += p.packets;
        let e = degree.entry(user).or_insert((0, 0));
        e.0 += 1;
        if !mapping.is_allowed(dst) {
            e.1 += 1;
        }
    }

    let raw = |feature: Feature, user: &str, p: &Pair| -> f64 {
        let per_packet = |n: u64| {
            if p.packets == 0 {
                0.0
            } else {
                (n as f64 / p.packets as f64).min(1.0)
            }
        };
        match feature {
            Feature::Unauthorized => {
                let (all, outside) = degree[user];
                outside as f64 / all as f64
            }
            Feature::SpamFraction => per_packet(p.spam),
            Feature::SensitiveRate => per_packet(p.sensitive),
            Feature::OutDegree => degree[user].0 as f64,
            Feature::BurstRate => p.burst,
            Feature::PacketCount => p.packets as f64,
            Feature::ByteCount => p.bytes as f64,
            Feature::LengthBucket => p.length as f64,
        }
    };

    let mut bounds = [(0.0f64, 0.0f64); INPUTS];
    for (d, rule) in rules.iter().enumerate() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        if rule.min.is_none() || rule.max.is_none() {
            for (&(user, _), p) in &pairs {
                let v = raw(rule.feature, user, p);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        bounds[d] = (rule.min.unwrap_or(lo), rule.max.unwrap_or(hi));
    }

    let mut out = Vec::with_capacity(pairs.len());
    for (&(user, dst), p) in &pairs {
        let community = community_of(user);
        let same_total = dest_by_community[dst][community];
        let mut activations = [0.0; INPUTS];
        for (d, rule) in rules.iter().enumerate() {
            let (lo, hi) = bounds[d];
            activations[d] = rule.normalize(raw(rule.feature, user, p), lo, hi);
        }
        out.push(ActivityRecord {
            user_id: user.to_string(),
            community_id: community.to_string(),
            source_id: dst.to_string(),
            hits_other: dest_total[dst] - same_total,
            hits_same: same_total - p.packets,
            spam_requests: p.spam.min(p.packets),
            total_requests: p.packets,
            activations,
        });
    }
    Ok(out)
}

/// Per-row prediction: the row's user ended in a positive band, or the row's
/// destination was cut off during recovery.
pub fn flag_rows(records: &[TrafficRecord], report: &DetectionReport) -> Vec<bool> {
    let mut cut: BTreeSet<(&str, &str)> = BTreeSet::new();
    for v in &report.verdicts {
        for s in &v.terminated_sources {
            cut.insert((v.user_id.as_str(), s.as_str()));
        }
    }
    records
        .iter()
        .map(|r| {
            let positive = report
                .verdict(&r.source_address)
                .is_some_and(|v| v.band.is_positive());
            positive || cut.contains(&(r.source_address.as_str(), r.destination_address.as_str()))
        })
        .collect()
}
