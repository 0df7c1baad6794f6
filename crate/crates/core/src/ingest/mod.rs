//! File formats: activity and label CSVs, traffic summaries, reports.

mod activity;
mod report;
mod traffic;

use thiserror::Error;

pub use activity::{
    parse_activity_csv, parse_labels_csv, read_activity, read_labels, write_activity,
    write_activity_csv, write_labels, write_labels_csv, ACTIVITY_HEADER, LABELS_HEADER,
};
pub use report::{
    metrics_path_for, read_report_json, write_report, ReportFormat, METRICS_HEADER, VERDICT_HEADER,
};
pub use traffic::{
    flag_rows, load_mapping, map_traffic_records, parse_mapping, parse_traffic_csv, read_traffic,
    write_traffic_csv, Feature, PropertyMapping, PropertyRule, TrafficRecord, TRAFFIC_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch { expected: String, found: String },
    #[error("row {row}: {message}")]
    ParseError { row: usize, message: String },
    #[error("mapping line {line}: {message}")]
    MappingError { line: usize, message: String },
    #[error("property p{0} is not mapped")]
    UnmappedProperty(usize),
    #[error("io error: {0}")]
    IoError(String),
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::IoError(e.to_string())
    }
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        let row = e.position().map(|p| p.record() as usize).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => IngestError::IoError(io.to_string()),
            kind => IngestError::ParseError {
                row,
                message: format!("{kind:?}"),
            },
        }
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    if found.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(IngestError::SchemaMismatch {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
    row: usize,
) -> Result<T, IngestError>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(idx).ok_or_else(|| IngestError::ParseError {
        row,
        message: format!("missing {name}"),
    })?;
    raw.trim().parse().map_err(|e| IngestError::ParseError {
        row,
        message: format!("{name} = {raw:?}: {e}"),
    })
}
