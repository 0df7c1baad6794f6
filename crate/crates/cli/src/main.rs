use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nhad::datagen::{generate, SyntheticConfig};
use nhad::detector::{run_detection, Band, DetectionReport, DetectorConfig};
use nhad::fuzzy::{build_default_fis, load_rules, FuzzyInferenceSystem, DEFAULT_SAMPLES};
use nhad::harness::{run_batch, write_summary_csv, BatchSummary};
use nhad::healing::HealingThresholds;
use nhad::ingest::{
    load_mapping, map_traffic_records, parse_activity_csv, parse_labels_csv, parse_traffic_csv,
    write_activity_csv, write_labels_csv, write_report, PropertyMapping, ReportFormat,
};
use nhad::metrics::{evaluate, GroundTruth};

const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "nhad",
    version,
    about = "Neuro-fuzzy horizontal anomaly detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic network (activity.csv + labels.csv)
    Generate {
        #[command(flatten)]
        net: NetArgs,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run detection over an activity or traffic CSV and write a report
    Detect {
        /// Activity CSV (as written by `generate`)
        #[arg(long, conflicts_with = "traffic", required_unless_present = "traffic")]
        activity: Option<PathBuf>,
        /// Raw traffic CSV, mapped to activations through --mapping
        #[arg(long)]
        traffic: Option<PathBuf>,
        /// Property mapping file for --traffic (built-in mapping if omitted)
        #[arg(long, requires = "traffic")]
        mapping: Option<PathBuf>,
        /// Labels CSV; adds a metrics block to the report
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        det: DetectArgs,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Report format
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Repeated generate+detect runs with seeds seed, seed+1, ...
    Evaluate {
        #[command(flatten)]
        net: NetArgs,
        /// Number of runs
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[command(flatten)]
        det: DetectArgs,
        /// Output directory for summary.csv
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Serialize)]
struct NetArgs {
    /// Mean users per community
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    /// Number of communities
    #[arg(long, default_value_t = 10)]
    communities: usize,
    /// Mean number of sources
    #[arg(long, default_value_t = 100.0)]
    sources: f64,
    /// Fraction of sources that turn anomalous (at most 0.5)
    #[arg(long, default_value_t = 0.1)]
    anomaly: f64,
    /// Fraction of users that are active
    #[arg(long, default_value_t = 1.0)]
    active: f64,
    /// Base RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl NetArgs {
    fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_communities: self.communities,
            lambda: self.lambda,
            source_lambda: self.sources,
            anomaly_fraction: self.anomaly,
            active_user_fraction: self.active,
            seed: self.seed,
            ..SyntheticConfig::default()
        }
    }
}

#[derive(Args, Clone, Serialize)]
struct DetectArgs {
    /// Rule file replacing the built-in rule base
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Defuzzification grid size
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Safe threshold on the final cost
    #[arg(long, default_value_t = 0.5)]
    safe: f64,
    /// Hard-anomaly threshold on the final cost
    #[arg(long, default_value_t = 0.7)]
    hard: f64,
    /// Warnings before a soft anomaly is eliminated
    #[arg(long, default_value_t = 3)]
    warnings: u32,
    /// Iteration budget
    #[arg(long, default_value_t = 50)]
    budget: usize,
}

impl DetectArgs {
    fn fis(&self) -> Result<FuzzyInferenceSystem> {
        let mut fis = build_default_fis();
        if let Some(path) = &self.rules {
            let rules = load_rules(path, &fis)?;
            fis = fis.with_rules(rules)?;
        }
        if self.samples != fis.samples() {
            fis = fis.with_samples(self.samples)?;
        }
        Ok(fis)
    }

    fn detector(&self) -> Result<DetectorConfig> {
        let thresholds = HealingThresholds::new(self.safe, self.hard, self.warnings)?;
        if self.budget == 0 {
            bail!("invalid config: budget must be at least 1");
        }
        Ok(DetectorConfig {
            thresholds,
            budget: self.budget,
        })
    }
}

/// Everything a run was configured with; echoed into reports.
#[derive(Serialize)]
struct RunConfig<'a> {
    subcommand: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    synthetic: Option<SyntheticConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runs: Option<usize>,
    detector: Option<&'a DetectArgs>,
    inputs: serde_json::Value,
    out: &'a Path,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate { net, out } => cmd_generate(&net, &out),
        Command::Detect {
            activity,
            traffic,
            mapping,
            labels,
            det,
            out,
            format,
        } => cmd_detect(
            activity.as_deref(),
            traffic.as_deref(),
            mapping.as_deref(),
            labels.as_deref(),
            &det,
            &out,
            format,
        ),
        Command::Evaluate {
            net,
            runs,
            det,
            out,
        } => cmd_evaluate(&net, runs, &det, &out),
    }
}

fn cmd_generate(net: &NetArgs, out: &Path) -> Result<ExitCode> {
    let labeled = generate(&net.synthetic())?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_activity_csv(out.join("activity.csv"), &labeled.records)?;
    write_labels_csv(out.join("labels.csv"), &labeled.labels)?;
    println!(
        "wrote {} records for {} users, {} flagged sources, to {}",
        labeled.records.len(),
        labeled.users.len(),
        labeled.flagged_sources(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_detect(
    activity: Option<&Path>,
    traffic: Option<&Path>,
    mapping: Option<&Path>,
    labels: Option<&Path>,
    det: &DetectArgs,
    out: &Path,
    format: ReportFormat,
) -> Result<ExitCode> {
    let fis = det.fis()?;
    let cfg = det.detector()?;
    let records = match (activity, traffic) {
        (Some(path), _) => parse_activity_csv(path)?,
        (None, Some(path)) => {
            let mapping = match mapping {
                Some(m) => load_mapping(m)?,
                None => PropertyMapping::default(),
            };
            map_traffic_records(&parse_traffic_csv(path)?, &mapping)?
        }
        (None, None) => bail!("one of --activity or --traffic is required"),
    };
    let truth = match labels {
        Some(p) => Some(GroundTruth::from_labels(&parse_labels_csv(p)?)?),
        None => None,
    };

    let mut report = run_detection(&records, &fis, &cfg)?;
    if let Some(truth) = &truth {
        report.metrics = Some(evaluate(&report, truth)?);
    }
    let echo = RunConfig {
        subcommand: "detect",
        synthetic: None,
        runs: None,
        detector: Some(det),
        inputs: serde_json::json!({
            "activity": activity,
            "traffic": traffic,
            "mapping": mapping,
            "labels": labels,
            "format": format,
        }),
        out,
    };
    report.config = serde_json::to_value(&echo)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(match format {
        ReportFormat::Json => "report.json",
        ReportFormat::Csv => "report.csv",
    });
    write_report(&report, &path, format)?;
    print_detect_summary(&report, &path)?;

    Ok(if report.iterations.converged {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "detection did not converge within {} iterations",
            report.iterations.budget
        );
        ExitCode::from(EXIT_NOT_CONVERGED)
    })
}

fn print_detect_summary(report: &DetectionReport, path: &Path) -> io::Result<()> {
    let mut w = io::stdout().lock();
    writeln!(
        w,
        "{} users, {} iterations, report at {}",
        report.verdicts.len(),
        report.iterations.used,
        path.display()
    )?;
    for band in Band::ALL {
        writeln!(w, "  {:<13} {}", band.as_str(), report.count(band))?;
    }
    if let Some(m) = &report.metrics {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        writeln!(
            w,
            "  accuracy {}  detection_rate {}  false_positive_rate {}",
            f(m.accuracy),
            f(m.detection_rate),
            f(m.false_positive_rate)
        )?;
    }
    Ok(())
}

fn cmd_evaluate(net: &NetArgs, runs: usize, det: &DetectArgs, out: &Path) -> Result<ExitCode> {
    if runs == 0 {
        bail!("invalid config: runs must be at least 1");
    }
    let synthetic = net.synthetic();
    synthetic.validate()?;
    let fis = det.fis()?;
    let cfg = det.detector()?;
    let summary = run_batch(&synthetic, runs, &fis, &cfg)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("summary.csv");
    write_summary_csv(&summary, BufWriter::new(File::create(&path)?))?;
    let echo = RunConfig {
        subcommand: "evaluate",
        synthetic: Some(synthetic),
        runs: Some(runs),
        detector: Some(det),
        inputs: serde_json::Value::Null,
        out,
    };
    fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&echo)? + "\n",
    )?;
    print_table(&summary)?;

    Ok(if summary.mean.non_converged > 0 {
        eprintln!(
            "{} of {runs} runs did not converge",
            summary.mean.non_converged
        );
        ExitCode::from(EXIT_NOT_CONVERGED)
    } else {
        ExitCode::SUCCESS
    })
}

fn print_table(summary: &BatchSummary) -> io::Result<()> {
    let mut w = io::stdout().lock();
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    writeln!(
        w,
        "{:>5} {:>8} {:>9} {:>9} {:>9} {:>9} {:>6} {:>5}",
        "run", "seed", "accuracy", "filter", "converge", "recov%", "failed", "iters"
    )?;
    for r in &summary.runs {
        let m = &r.metrics;
        writeln!(
            w,
            "{:>5} {:>8} {:>9} {:>9} {:>9} {:>9} {:>6} {:>5}",
            r.run,
            r.seed,
            f(m.accuracy),
            f(Some(m.filtering_rate)),
            f(m.convergence_value),
            f(m.users_recovered_pct),
            u8::from(m.failed),
            r.iterations_used
        )?;
    }
    let m = &summary.mean;
    writeln!(
        w,
        "{:>5} {:>8} {:>9} {:>9} {:>9} {:>9} {:>6} {:>5}",
        "mean",
        "",
        f(m.accuracy),
        f(m.filtering_rate),
        f(m.convergence_value),
        f(m.users_recovered_pct),
        m.failures,
        f(m.iterations_used)
    )?;
    Ok(())
}
