use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{check_header, field, IngestError};
use crate::fuzzy::INPUTS;
use crate::metrics::{AnomalyClass, LabelRow};
use crate::reputation::ActivityRecord;

pub const ACTIVITY_HEADER: [&str; 12] = [
    "user_id",
    "community_id",
    "source_id",
    "hits_other",
    "hits_same",
    "spam_requests",
    "total_requests",
    "p1",
    "p2",
    "p3",
    "p4",
    "p5",
];

pub const LABELS_HEADER: [&str; 4] = ["user_id", "source_id", "is_anomaly", "class"];

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).from_reader(input)
}

/// Parses activity rows. Row numbers in errors count data rows from 1.
pub fn read_activity<R: Read>(input: R) -> Result<Vec<ActivityRecord>, IngestError> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &ACTIVITY_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != ACTIVITY_HEADER.len() {
            return Err(IngestError::ParseError {
                row,
                message: format!(
                    "expected {} fields, found {}",
                    ACTIVITY_HEADER.len(),
                    rec.len()
                ),
            });
        }
        let mut activations = [0.0; INPUTS];
        for (d, a) in activations.iter_mut().enumerate() {
            *a = field(&rec, 7 + d, ACTIVITY_HEADER[7 + d], row)?;
        }
        let record = ActivityRecord {
            user_id: rec[0].to_string(),
            community_id: rec[1].to_string(),
            source_id: rec[2].to_string(),
            hits_other: field(&rec, 3, "hits_other", row)?,
            hits_same: field(&rec, 4, "hits_same", row)?,
            spam_requests: field(&rec, 5, "spam_requests", row)?,
            total_requests: field(&rec, 6, "total_requests", row)?,
            activations,
        };
        if record.user_id.is_empty() || record.source_id.is_empty() {
            return Err(IngestError::ParseError {
                row,
                message: "empty user or source id".into(),
            });
        }
        record.validate().map_err(|e| IngestError::ParseError {
            row,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn parse_activity_csv(path: impl AsRef<Path>) -> Result<Vec<ActivityRecord>, IngestError> {
    read_activity(File::open(path)?)
}

pub fn write_activity<W: Write>(out: W, records: &[ActivityRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ACTIVITY_HEADER)?;
    for r in records {
        let mut row = vec![
            r.user_id.clone(),
            r.community_id.clone(),
            r.source_id.clone(),
            r.hits_other.to_string(),
            r.hits_same.to_string(),
            r.spam_requests.to_string(),
            r.total_requests.to_string(),
        ];
        row.extend(r.activations.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_activity_csv(
    path: impl AsRef<Path>,
    records: &[ActivityRecord],
) -> Result<(), IngestError> {
    write_activity(File::create(path)?, records)
}

pub fn read_labels<R: Read>(input: R) -> Result<Vec<LabelRow>, IngestError> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &LABELS_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != LABELS_HEADER.len() {
            return Err(IngestError::ParseError {
                row,
                message: format!(
                    "expected {} fields, found {}",
                    LABELS_HEADER.len(),
                    rec.len()
                ),
            });
        }
        let is_anomaly = match rec[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(IngestError::ParseError {
                    row,
                    message: format!("is_anomaly must be 0 or 1, found {other:?}"),
                })
            }
        };
        let class = AnomalyClass::parse(rec[3].trim()).map_err(|e| IngestError::ParseError {
            row,
            message: e.to_string(),
        })?;
        out.push(LabelRow {
            user_id: rec[0].to_string(),
            source_id: rec[1].to_string(),
            is_anomaly,
            class,
        });
    }
    Ok(out)
}

pub fn parse_labels_csv(path: impl AsRef<Path>) -> Result<Vec<LabelRow>, IngestError> {
    read_labels(File::open(path)?)
}

pub fn write_labels<W: Write>(out: W, labels: &[LabelRow]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LABELS_HEADER)?;
    for l in labels {
        w.write_record([
            l.user_id.as_str(),
            l.source_id.as_str(),
            if l.is_anomaly { "1" } else { "0" },
            l.class.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv(path: impl AsRef<Path>, labels: &[LabelRow]) -> Result<(), IngestError> {
    write_labels(File::create(path)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "user_id,community_id,source_id,hits_other,hits_same,spam_requests,total_requests,p1,p2,p3,p4,p5\n";

    #[test]
    fn parses_valid_row() {
        let text = format!("{HEADER}u1,c1,s1,5,5,0,10,0.1,0.1,0.1,0.1,0.1\n");
        let recs = read_activity(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].hits_other, 5);
        assert_eq!(recs[0].activations, [0.1; 5]);
    }

    #[test]
    fn spam_above_total_is_a_row_error() {
        let text = format!("{HEADER}u1,c1,s1,5,5,0,10,0,0,0,0,0\nu1,c1,s2,5,5,11,10,0,0,0,0,0\n");
        assert!(matches!(
            read_activity(text.as_bytes()),
            Err(IngestError::ParseError { row: 2, .. })
        ));
    }

    #[test]
    fn missing_column_is_schema_mismatch() {
        let text =
            "user_id,community_id,source_id,hits_other,hits_same,spam_requests,p1,p2,p3,p4,p5\n";
        assert!(matches!(
            read_activity(text.as_bytes()),
            Err(IngestError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_numbers_and_short_rows() {
        let text = format!("{HEADER}u1,c1,s1,x,5,0,10,0,0,0,0,0\n");
        assert!(matches!(
            read_activity(text.as_bytes()),
            Err(IngestError::ParseError { row: 1, .. })
        ));
        let text = format!("{HEADER}u1,c1,s1,5,5,0,10,0,0,0,0\n");
        assert!(matches!(
            read_activity(text.as_bytes()),
            Err(IngestError::ParseError { row: 1, .. })
        ));
        let text = format!("{HEADER}u1,c1,s1,5,5,0,10,0,0,1.5,0,0\n");
        assert!(matches!(
            read_activity(text.as_bytes()),
            Err(IngestError::ParseError { row: 1, .. })
        ));
    }

    #[test]
    fn activity_round_trip() {
        let recs = vec![ActivityRecord {
            user_id: "u,1".into(),
            community_id: "c".into(),
            source_id: "s".into(),
            hits_other: 3,
            hits_same: 0,
            spam_requests: 1,
            total_requests: 7,
            activations: [0.1 + 0.2, 1.0 / 3.0, 0.0, 1.0, 5e-324],
        }];
        let mut buf = Vec::new();
        write_activity(&mut buf, &recs).unwrap();
        assert_eq!(read_activity(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn labels_round_trip_and_errors() {
        let labels = vec![
            LabelRow {
                user_id: "u".into(),
                source_id: "s".into(),
                is_anomaly: true,
                class: AnomalyClass::Soft,
            },
            LabelRow {
                user_id: "".into(),
                source_id: "s".into(),
                is_anomaly: false,
                class: AnomalyClass::Benign,
            },
        ];
        let mut buf = Vec::new();
        write_labels(&mut buf, &labels).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), labels);
        let bad = "user_id,source_id,is_anomaly,class\nu,s,2,hard\n";
        assert!(matches!(
            read_labels(bad.as_bytes()),
            Err(IngestError::ParseError { row: 1, .. })
        ));
        let bad = "user_id,source_id,is_anomaly,class\nu,s,1,medium\n";
        assert!(matches!(
            read_labels(bad.as_bytes()),
            Err(IngestError::ParseError { row: 1, .. })
        ));
    }

    #[test]
    fn empty_file_header_only() {
        let mut buf = Vec::new();
        write_activity(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), HEADER);
        assert!(read_activity(buf.as_slice()).unwrap().is_empty());
    }
}
