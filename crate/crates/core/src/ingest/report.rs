use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::detector::DetectionReport;
use crate::metrics::RunMetrics;

/// Columns of the verdict CSV. `flagged_as` is empty for never-flagged users and
/// `terminated_sources` joins the removed source ids with `;`.
pub const VERDICT_HEADER: [&str; 11] = [
    "user_id",
    "community_id",
    "band",
    "s_f_raw",
    "s_f_user",
    "c_g_crisp",
    "s_f_final",
    "iteration",
    "warnings",
    "flagged_as",
    "terminated_sources",
];

/// Columns of the metrics CSV written next to the verdicts; undefined values are empty.
pub const METRICS_HEADER: [&str; 2] = ["metric", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// `<dir>/<stem>_metrics.csv` for a verdict file `<dir>/<stem>.csv`.
pub fn metrics_path_for(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    path.with_file_name(format!("{stem}_metrics.csv"))
}

pub fn write_report(
    report: &DetectionReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<(), IngestError> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => {
            let mut out = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut out, report)
                .map_err(|e| IngestError::IoError(e.to_string()))?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
        ReportFormat::Csv => {
            write_verdicts(report, File::create(path)?)?;
            write_metrics(
                report.metrics.as_ref(),
                File::create(metrics_path_for(path))?,
            )?;
        }
    }
    Ok(())
}

fn write_verdicts<W: Write>(report: &DetectionReport, out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VERDICT_HEADER)?;
    for v in &report.verdicts {
        w.write_record([
            v.user_id.clone(),
            v.community_id.clone(),
            v.band.as_str().to_string(),
            v.costs.s_f_raw.to_string(),
            v.costs.s_f_user.to_string(),
            v.costs.c_g_crisp.to_string(),
            v.costs.s_f_final.to_string(),
            v.iteration.to_string(),
            v.warnings.to_string(),
            v.flagged_as
                .map(|b| b.as_str().to_string())
                .unwrap_or_default(),
            v.terminated_sources.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_metrics<W: Write>(metrics: Option<&RunMetrics>, out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    if let Some(m) = metrics {
        let rows = [
            ("tp", m.confusion.tp.to_string()),
            ("fp", m.confusion.fp.to_string()),
            ("tn", m.confusion.tn.to_string()),
            ("fn", m.confusion.fn_.to_string()),
            ("accuracy", opt(m.accuracy)),
            ("detection_rate", opt(m.detection_rate)),
            ("false_positive_rate", opt(m.false_positive_rate)),
            ("precision", opt(m.precision)),
            ("f_score", opt(m.f_score)),
            ("filtering_rate", m.filtering_rate.to_string()),
            ("detected_fraction", opt(m.detected_fraction)),
            ("convergence_value", opt(m.convergence_value)),
            ("users_recovered_pct", opt(m.users_recovered_pct)),
            ("soft_recovered_pct", opt(m.soft_recovered_pct)),
            ("failed", m.failed.to_string()),
        ];
        for (k, v) in rows {
            w.write_record([k, v.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<DetectionReport, IngestError> {
    let file = File::open(path)?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| IngestError::ParseError {
        row: e.line(),
        message: e.to_string(),
    })
}
