use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use strata_bounds::estimation::{estimate_sharp, estimate_smooth, EstimationConfig};
use strata_bounds::io::{read_nuisances, read_observations, ObservationOptions};
use strata_bounds::nuisance::Floors;
use strata_bounds::smoothing::GFamily;
use strata_bounds::Stratum;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_strata-bounds"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A panel-a sample with its oracle nuisances tabulated on a fine grid.
fn sample(dir: &TempDir, extra: &[&str]) -> (PathBuf, PathBuf) {
    let data = dir.path().join("data.csv");
    let nuis = dir.path().join("nuis.csv");
    let mut args = vec!["generate", "--n", "600", "-o", p(&data), "--nuisance-out", p(&nuis), "--grid-points", "401"];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (data, nuis)
}

/// The error document is the last stderr line; log lines may precede it.
fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|_| panic!("stderr not JSON: {text}"))
}

#[test]
fn smooth_estimate_matches_library_call() {
    let dir = TempDir::new().unwrap();
    let (data, nuis) = sample(&dir, &["--panel", "a"]);
    let out = run(&[
        "estimate", "--data", p(&data), "--nuisance-file", p(&nuis), "--method", "smooth", "--h", "0.01", "--stratum", "at",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rec = &doc["results"][0];

    let table = read_observations(std::fs::File::open(&data).unwrap(), &ObservationOptions::default())
        .unwrap()
        .table;
    let bundle = read_nuisances(std::fs::File::open(&nuis).unwrap(), table.n(), Floors::default()).unwrap();
    let cfg = EstimationConfig {
        eps0: 1e-12,
        ..EstimationConfig::new(Stratum::At)
    };
    let est = estimate_smooth(&table, &bundle, &cfg, &GFamily::new(0.01).unwrap()).unwrap();
    let lo = est.lower.unwrap();
    let hi = est.upper.unwrap();
    assert_eq!(rec["estimate_lower"].as_f64().unwrap().to_bits(), lo.estimate.to_bits());
    assert_eq!(rec["estimate_upper"].as_f64().unwrap().to_bits(), hi.estimate.to_bits());
    assert_eq!(rec["se_lower"].as_f64().unwrap().to_bits(), lo.se.to_bits());
    assert_eq!(rec["ci_effect"][0].as_f64().unwrap().to_bits(), est.ci_effect[0].to_bits());
    assert_eq!(rec["ci_set"][1].as_f64().unwrap().to_bits(), est.ci_set[1].to_bits());
    assert_eq!(doc["nuisance"]["provenance"], "external");
}

#[test]
fn trim_with_every_row_indifferent_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("design.json");
    std::fs::write(&cfg, r#"{"shares": [0.0, 1.0, 0.0]}"#).unwrap();
    let (data, nuis) = sample(&dir, &["--config", p(&cfg)]);
    let out = run(&["estimate", "--data", p(&data), "--nuisance-file", p(&nuis), "--method", "trim"]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "all_trimmed");
    assert_eq!(err["error"]["exit_code"], 3);
}

#[test]
fn automatic_rho_is_reported() {
    let dir = TempDir::new().unwrap();
    let (data, nuis) = sample(&dir, &["--panel", "b"]);
    let out = run(&[
        "estimate", "--data", p(&data), "--nuisance-file", p(&nuis), "--method", "switch", "--rho", "auto",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let n = 600f64;
    let rho = doc["results"][0]["diagnostics"]["rho"].as_f64().unwrap();
    assert!((rho - n.powf(-0.25) / n.ln()).abs() < 1e-15);
    assert_eq!(doc["resolved_config"]["rho"], "auto");
}

#[test]
fn empty_smoothing_grid_exits_2() {
    let out = run(&["bounds-curve", "--panel", "a"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");
}

#[test]
fn invalid_rows_exit_2_with_failures() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "y,s,d,x1\n1.0,1,1,0.5\n2.0,1,2,0.1\nNA,0,0,0.3\n").unwrap();
    let out = run(&["estimate", "--data", p(&data), "--propensity", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "validation");
    assert!(!err["error"]["failures"].as_array().unwrap().is_empty());
}

#[test]
fn malformed_csv_exits_2() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "y,s,d\n1.0,1,1\nabc,1,0\n").unwrap();
    let out = run(&["estimate", "--data", p(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "parse");
}

#[test]
fn inefficient_needs_known_propensity() {
    let dir = TempDir::new().unwrap();
    let (data, _) = sample(&dir, &["--panel", "a"]);
    let out = run(&["estimate", "--data", p(&data), "--method", "inefficient", "--folds", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sharp_limit_of_curve_matches_sharp_estimate() {
    let dir = TempDir::new().unwrap();
    let (data, nuis) = sample(&dir, &["--panel", "a"]);
    // Floors below every oracle probability so no row is clamped onto p0 = 1.
    let floors = ["--m-floor", "1e-9", "--s-floor", "1e-9"];
    let mut args = vec!["bounds-curve", "--data", p(&data), "--nuisance-file", p(&nuis), "--h", "0.1,1e-9"];
    args.extend_from_slice(&floors);
    let curve = run(&args);
    assert!(curve.status.success(), "{}", String::from_utf8_lossy(&curve.stderr));
    let mut rdr = csv::Reader::from_reader(curve.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let field = |r: &csv::StringRecord, k: usize| r[k].parse::<f64>().unwrap();

    let table = read_observations(std::fs::File::open(&data).unwrap(), &ObservationOptions::default())
        .unwrap()
        .table;
    let bundle = read_nuisances(std::fs::File::open(&nuis).unwrap(), table.n(), Floors::new(1e-9, 1e-9).unwrap()).unwrap();
    let sharp = estimate_sharp(
        &table,
        &bundle,
        &EstimationConfig {
            eps0: 1e-12,
            ..EstimationConfig::new(Stratum::At)
        },
    )
    .unwrap();
    let (lo, hi) = (sharp.lower.unwrap().estimate, sharp.upper.unwrap().estimate);
    assert!((field(&rows[1], 1) - lo).abs() < 1e-6, "{} vs {lo}", &rows[1][1]);
    assert!((field(&rows[1], 2) - hi).abs() < 1e-6, "{} vs {hi}", &rows[1][2]);
    // Wider at the larger h.
    assert!(field(&rows[0], 1) < field(&rows[1], 1));
    assert!(field(&rows[0], 2) > field(&rows[1], 2));
}

#[test]
fn population_curve_records_per_h_errors() {
    let out = run(&["bounds-curve", "--panel", "a", "--population", "--h", "5,1e-9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "h,lower,upper,se_lower,se_upper,ci_lower,ci_upper,error");
    assert!(lines[1].contains("trim"), "{}", lines[1]);
    assert!(lines[2].starts_with("1e-9,0.33795950"), "{}", lines[2]);
}

#[test]
fn simulate_writes_metrics_and_is_repeatable() {
    let args = ["simulate", "--panel", "c", "--reps", "20", "--n", "200"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("n,estimator,bias,rmse,size,mc_sd,mean_se,reps_ok,failures"));
    assert_eq!(text.lines().count(), 1 + 7);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let (data, nuis) = sample(&dir, &["--panel", "a"]);
    let cfg = dir.path().join("est.json");
    std::fs::write(
        &cfg,
        format!(r#"{{"methods": ["sharp"], "alpha": 0.1, "nuisance_file": "{}"}}"#, p(&nuis)),
    )
    .unwrap();
    let out = run(&["estimate", "--data", p(&data), "--config", p(&cfg), "--alpha", "0.2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["resolved_config"]["alpha"], 0.2);
    assert_eq!(doc["results"][0]["method"], "sharp");

    std::fs::write(&cfg, r#"{"not_a_key": 1}"#).unwrap();
    let out = run(&["estimate", "--data", p(&data), "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}
