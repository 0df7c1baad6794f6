use std::path::Path;
use std::process::{Command, Output};

use nhad::detector::Band;
use nhad::ingest::read_report_json;

fn nhad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhad"))
        .args(args)
        .output()
        .expect("spawn nhad")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero_and_lists_flags() {
    let out = nhad(&["--help"]);
    assert_eq!(code(&out), 0);
    for sub in ["generate", "detect", "evaluate"] {
        let out = nhad(&[sub, "--help"]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--out"), "{sub}: {text}");
    }
    let text = String::from_utf8(nhad(&["evaluate", "--help"]).stdout).unwrap();
    for flag in [
        "--lambda",
        "--communities",
        "--sources",
        "--anomaly",
        "--active",
        "--seed",
        "--runs",
        "--rules",
        "--safe",
        "--hard",
        "--warnings",
        "--budget",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    let text = String::from_utf8(nhad(&["detect", "--help"]).stdout).unwrap();
    for flag in [
        "--mapping",
        "--format",
        "--labels",
        "--traffic",
        "--activity",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn unknown_flag_exits_one() {
    assert_eq!(code(&nhad(&["generate", "--frobnicate"])), 1);
    assert_eq!(code(&nhad(&[])), 1);
    assert_eq!(
        code(&nhad(&["detect", "--format", "xml", "--activity", "a.csv"])),
        1
    );
}

#[test]
fn generate_writes_two_deterministic_csvs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = nhad(&[
            "generate",
            "--lambda",
            "100",
            "--anomaly",
            "0.1",
            "--seed",
            "7",
            "--out",
            path(dir.path()),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["activity.csv", "labels.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{file}");
    }
}

#[test]
fn generate_rejects_anomaly_above_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = nhad(&["generate", "--anomaly", "0.6", "--out", path(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));
    assert!(!dir.path().join("activity.csv").exists());
}

#[test]
fn detect_benign_fixture_is_all_safe() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(
        code(&nhad(&[
            "generate",
            "--lambda",
            "30",
            "--anomaly",
            "0",
            "--seed",
            "3",
            "--out",
            d
        ])),
        0
    );
    let activity = dir.path().join("activity.csv");
    let out = nhad(&["detect", "--activity", path(&activity), "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report_json(dir.path().join("report.json")).unwrap();
    assert!(!report.verdicts.is_empty());
    assert!(report.verdicts.iter().all(|v| v.band == Band::Safe));
    assert_eq!(report.iterations.used, 1);
    assert!(report.metrics.is_none());
    assert_eq!(report.config["subcommand"], "detect");
}

#[test]
fn detect_with_broken_rule_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(code(&nhad(&["generate", "--lambda", "10", "--out", d])), 0);
    let rules = dir.path().join("rules.txt");
    std::fs::write(&rules, "IF p1=lofty AND p2=low THEN out=perfect\n").unwrap();
    let activity = dir.path().join("activity.csv");
    let out = nhad(&[
        "detect",
        "--activity",
        path(&activity),
        "--rules",
        path(&rules),
        "--out",
        d,
    ]);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("report.json").exists());

    std::fs::write(&rules, "").unwrap();
    assert_eq!(
        code(&nhad(&[
            "detect",
            "--activity",
            path(&activity),
            "--rules",
            path(&rules),
            "--out",
            d
        ])),
        1
    );
}

#[test]
fn detect_missing_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = nhad(&[
        "detect",
        "--activity",
        path(&missing),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn detect_with_labels_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(
        code(&nhad(&[
            "generate",
            "--lambda",
            "40",
            "--anomaly",
            "0.2",
            "--seed",
            "11",
            "--out",
            d
        ])),
        0
    );
    let activity = dir.path().join("activity.csv");
    let labels = dir.path().join("labels.csv");
    let out = nhad(&[
        "detect",
        "--activity",
        path(&activity),
        "--labels",
        path(&labels),
        "--out",
        d,
    ]);
    assert_eq!(code(&out), 0);
    let report = read_report_json(dir.path().join("report.json")).unwrap();
    let m = report.metrics.expect("metrics block");
    assert!(m.accuracy.unwrap() > 0.9);

    let out = nhad(&[
        "detect",
        "--activity",
        path(&activity),
        "--labels",
        path(&labels),
        "--out",
        d,
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    let metrics = std::fs::read_to_string(dir.path().join("report_metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value\n"));
    assert!(metrics.contains("\naccuracy,"));
}

#[test]
fn detect_exhausted_budget_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(
        code(&nhad(&[
            "generate",
            "--lambda",
            "40",
            "--anomaly",
            "0.3",
            "--seed",
            "5",
            "--out",
            d
        ])),
        0
    );
    let activity = dir.path().join("activity.csv");
    let out = nhad(&[
        "detect",
        "--activity",
        path(&activity),
        "--budget",
        "1",
        "--out",
        d,
    ]);
    assert_eq!(code(&out), 2);
    let report = read_report_json(dir.path().join("report.json")).unwrap();
    assert!(!report.iterations.converged);
}

#[test]
fn detect_rejects_bad_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(code(&nhad(&["generate", "--lambda", "10", "--out", d])), 0);
    let activity = dir.path().join("activity.csv");
    let out = nhad(&[
        "detect",
        "--activity",
        path(&activity),
        "--safe",
        "0.8",
        "--hard",
        "0.7",
        "--out",
        d,
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn evaluate_single_run_and_zero_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    let out = nhad(&[
        "evaluate", "--runs", "1", "--lambda", "30", "--seed", "4", "--out", d,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    let run: Vec<&str> = lines[1].split(',').collect();
    let mean: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(mean[0], "mean");
    // metric columns of the mean row equal the only run
    for col in [2, 3, 4, 5, 7, 8, 9, 10, 11] {
        assert_eq!(run[col], mean[col], "column {col}");
    }
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap())
            .unwrap();
    assert_eq!(config["runs"], 1);
    assert_eq!(config["synthetic"]["seed"], 4);

    let out = nhad(&["evaluate", "--runs", "0", "--out", d]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));
}

#[test]
fn detect_traffic_with_mapping_file() {
    let dir = tempfile::tempdir().unwrap();
    let traffic = dir.path().join("traffic.csv");
    std::fs::write(
        &traffic,
        "source_address,destination_address,packet_count,byte_count,burst_rate,length_bucket\n\
         10.0.1.1,10.0.0.1,10,1000,0.1,2\n\
         10.0.1.2,10.0.0.1,12,1200,0.1,2\n\
         10.1.1.1,10.1.0.1,9,900,0.2,2\n",
    )
    .unwrap();
    let mapping = dir.path().join("mapping.txt");
    std::fs::write(
        &mapping,
        "p1 = unauthorized 0 1\np2 = spam_fraction 0 1\np3 = sensitive_rate 0 1\n\
         p4 = out_degree\np5 = burst_rate 0 1\nallow = 10.*\n",
    )
    .unwrap();
    let out = nhad(&[
        "detect",
        "--traffic",
        path(&traffic),
        "--mapping",
        path(&mapping),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report_json(dir.path().join("report.json")).unwrap();
    assert_eq!(report.verdicts.len(), 3);

    std::fs::write(&mapping, "p1 = unauthorized\n").unwrap();
    let out = nhad(&[
        "detect",
        "--traffic",
        path(&traffic),
        "--mapping",
        path(&mapping),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
}
