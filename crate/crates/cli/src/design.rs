//! Subcommands driven by a simulation design: `simulate`, `bounds-curve` and `generate`.

use crate::args::{CurveArgs, DesignArgs, GenerateArgs, SimulateArgs};
use crate::error::{usage, CliError};
use crate::nuisance::{NuisanceFile, NuisanceSettings};
use serde::Serialize;
use std::io::Write;
use strata_bounds::estimation::{estimate_smooth, EstimationConfig};
use strata_bounds::io::{read_observations, write_metrics, write_nuisances, write_observations, write_power, ObservationOptions};
use strata_bounds::nuisance::NuisanceBundle;
use strata_bounds::simulation::{dgp_sample, run_experiment, DgpConfig, DgpId, Oracle, OracleTarget};
use strata_bounds::smoothing::{smooth_unconditional_bound, GFamily};
use strata_bounds::{validate, Error, ObservationTable, Side, Stratum};

fn io_err(e: std::io::Error) -> CliError {
    Error::from(e).into()
}

/// Config file, then preset, then individual flags.
pub fn resolve_design(d: &DesignArgs) -> Result<DgpConfig, CliError> {
    let mut cfg = match &d.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", p.display())))?
        }
        None => DgpConfig::default(),
    };
    if let Some(p) = d.panel {
        cfg.shares = DgpConfig::panel(p)?.shares;
    }
    if let Some(name) = &d.dgp {
        cfg.dgp = serde_json::from_value::<DgpId>(serde_json::Value::String(name.clone()))
            .map_err(|_| usage(format!("unknown design {name:?}, expected appendix_c or single_index")))?;
    }
    if let Some(s) = d.seed {
        cfg.base_seed = s;
    }
    if let Some(g) = d.gamma {
        cfg.gamma = g;
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct FailureRecord<'a> {
    n: usize,
    estimator: &'a str,
    rep: usize,
    error: &'a str,
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    resolved_config: &'a DgpConfig,
    target: OracleTarget,
    failures: Vec<FailureRecord<'a>>,
}

pub fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = resolve_design(&a.design)?;
    if !a.n.is_empty() {
        cfg.n = a.n.clone();
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(al) = a.alpha {
        cfg.alpha = al;
    }
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    let mut out = crate::sink(a.metrics.as_deref())?;
    write_metrics(&mut out, &report.metrics)?;
    out.flush().map_err(io_err)?;
    if let Some(p) = &a.power {
        let mut out = crate::sink(Some(p))?;
        write_power(&mut out, &report.power)?;
        out.flush().map_err(io_err)?;
    }
    if let Some(p) = &a.report {
        let doc = SimulationReport {
            resolved_config: &cfg,
            target: report.target,
            failures: report
                .failures
                .iter()
                .map(|(n, est, rep, msg)| FailureRecord {
                    n: *n,
                    estimator: est,
                    rep: *rep,
                    error: msg,
                })
                .collect(),
        };
        let mut out = crate::sink(Some(p))?;
        serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| usage(e.to_string()))?;
        writeln!(out).map_err(io_err)?;
        out.flush().map_err(io_err)?;
    }
    Ok(())
}

#[derive(Serialize, Default)]
struct CurveRow {
    h: f64,
    lower: Option<f64>,
    upper: Option<f64>,
    se_lower: Option<f64>,
    se_upper: Option<f64>,
    ci_lower: Option<f64>,
    ci_upper: Option<f64>,
    error: String,
}

enum CurveSource {
    Sample(ObservationTable, NuisanceBundle),
    Population(Oracle),
}

fn curve_row(src: &CurveSource, cfg: &EstimationConfig, h: f64) -> CurveRow {
    let mut row = CurveRow { h, ..CurveRow::default() };
    let fam = match GFamily::new(h) {
        Ok(f) => f,
        Err(e) => {
            row.error = e.to_string();
            return row;
        }
    };
    match src {
        CurveSource::Sample(table, bundle) => match estimate_smooth(table, bundle, cfg, &fam) {
            Ok(est) => {
                row.lower = est.lower.map(|e| e.estimate);
                row.upper = est.upper.map(|e| e.estimate);
                row.se_lower = est.lower.map(|e| e.se);
                row.se_upper = est.upper.map(|e| e.se);
                row.ci_lower = Some(est.ci_effect[0]);
                row.ci_upper = Some(est.ci_effect[1]);
            }
            Err(e) => row.error = e.to_string(),
        },
        CurveSource::Population(oracle) => {
            let lo = smooth_unconditional_bound(oracle, Side::Lower, &fam);
            let hi = smooth_unconditional_bound(oracle, Side::Upper, &fam);
            match (lo, hi) {
                (Ok(l), Ok(u)) => {
                    row.lower = Some(l);
                    row.upper = Some(u);
                }
                (Err(e), _) | (_, Err(e)) => row.error = e.to_string(),
            }
        }
    }
    row
}

pub fn cmd_bounds_curve(a: CurveArgs) -> Result<(), CliError> {
    if a.h.is_empty() {
        return Err(usage("--h needs at least one smoothing parameter"));
    }
    let design = DesignArgs {
        config: a.dgp_config.clone(),
        panel: a.panel,
        dgp: a.dgp.clone(),
        seed: a.nuisance.seed,
        gamma: a.gamma,
    };
    let design_given = design.config.is_some() || design.panel.is_some() || design.dgp.is_some();
    let src = match &a.data {
        Some(path) => {
            if design_given || a.population {
                return Err(usage("--data excludes the design options"));
            }
            let settings = NuisanceSettings::resolve(&a.nuisance, NuisanceFile::default())?;
            let opts = ObservationOptions {
                weight_col: settings.weights_col.clone(),
                keep: Vec::new(),
            };
            let table = read_observations(crate::open(path)?, &opts)?.table;
            let report = validate(&table);
            if !report.passed() {
                return Err(CliError::Validation(report));
            }
            let bundle = settings.build(&table)?;
            CurveSource::Sample(table, bundle)
        }
        None => {
            if !design_given {
                return Err(usage("give --data, or a design via --panel, --dgp or --dgp-config"));
            }
            let cfg = resolve_design(&design)?;
            cfg.validate()?;
            let oracle = Oracle::new(&cfg);
            if a.population {
                CurveSource::Population(oracle)
            } else {
                let n = a.n.unwrap_or(cfg.n[0]);
                let table = dgp_sample(&cfg, n, a.rep);
                let bundle = oracle.bundle(&table)?;
                CurveSource::Sample(table, bundle)
            }
        }
    };
    let oracle_run = a.data.is_none();
    let cfg = EstimationConfig {
        alpha: a.alpha.unwrap_or(0.05),
        eps0: a.eps0.unwrap_or(if oracle_run { 0.0 } else { 1e-12 }),
        ..EstimationConfig::new(Stratum::At)
    };
    let rows: Vec<CurveRow> = a.h.iter().map(|&h| curve_row(&src, &cfg, h)).collect();
    let out = crate::sink(a.output.as_deref())?;
    let mut wtr = csv::Writer::from_writer(out);
    for r in &rows {
        wtr.serialize(r).map_err(|e| usage(e.to_string()))?;
    }
    wtr.flush().map_err(io_err)?;
    Ok(())
}

pub fn cmd_generate(a: GenerateArgs) -> Result<(), CliError> {
    let cfg = resolve_design(&a.design)?;
    cfg.validate()?;
    if a.n < 10 {
        return Err(usage("--n must be at least 10"));
    }
    let table = dgp_sample(&cfg, a.n, a.rep);
    let mut out = crate::sink(a.output.as_deref())?;
    write_observations(&mut out, &table)?;
    out.flush().map_err(io_err)?;
    if let Some(p) = &a.nuisance_out {
        if a.grid_points < 2 {
            return Err(usage("--grid-points must be at least 2"));
        }
        let k = a.grid_points - 1;
        let grid: Vec<f64> = (0..=k).map(|j| j as f64 / k as f64).collect();
        let bundle = Oracle::new(&cfg).bundle(&table)?;
        let mut out = crate::sink(Some(p))?;
        write_nuisances(&mut out, &bundle, &grid)?;
        out.flush().map_err(io_err)?;
    }
    Ok(())
}
