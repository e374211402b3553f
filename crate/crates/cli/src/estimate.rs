use crate::args::{EstimateArgs, Format, MethodArg, SideArg};
use crate::error::{usage, CliError};
use crate::nuisance::{NuisanceFile, NuisanceSettings};
use serde::{Deserialize, Serialize, Serializer};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use strata_bounds::data::Diagnostics;
use strata_bounds::estimation::{
    default_rho, estimate_inefficient, estimate_sharp, estimate_smooth, estimate_switch, estimate_trim,
    heterogeneous_bounds, row_moments, EstimationConfig, GroupEstimate, RowRule,
};
use strata_bounds::io::{read_observations, ObservationOptions};
use strata_bounds::nuisance::{empirical_support, NuisanceBundle};
use strata_bounds::numeric::norm_quantile;
use strata_bounds::smoothing::GFamily;
use strata_bounds::{validate, BoundsEstimate, ObservationTable, Side, Stratum, StratumSpec};

/// Switching threshold choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rho {
    Auto,
    Value(f64),
}

impl std::str::FromStr for Rho {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Rho::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 => Ok(Rho::Value(v)),
            _ => Err(usage(format!("--rho expects `auto` or a nonnegative number, got {s:?}"))),
        }
    }
}

impl Serialize for Rho {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Rho::Auto => s.serialize_str("auto"),
            Rho::Value(v) => s.serialize_f64(*v),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RhoInput {
    Number(f64),
    Text(String),
}

/// Estimation keys of a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateFile {
    methods: Option<Vec<MethodArg>>,
    stratum: Option<Stratum>,
    side: Option<SideArg>,
    h: Option<Vec<f64>>,
    rho: Option<RhoInput>,
    eps_trim: Option<f64>,
    known_propensity: Option<bool>,
    alpha: Option<f64>,
    dominance: Option<bool>,
    group_col: Option<String>,
    eps0: Option<f64>,
}

const NUISANCE_KEYS: [&str; 10] = [
    "nuisance_file",
    "folds",
    "seed",
    "propensity",
    "cells",
    "lenient_cells",
    "m_floor",
    "s_floor",
    "support",
    "weights_col",
];

/// Every setting of an estimation run after applying precedence.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedEstimate {
    pub data: PathBuf,
    pub methods: Vec<MethodArg>,
    pub stratum: Stratum,
    pub side: SideArg,
    pub h: Vec<f64>,
    pub rho: Rho,
    pub eps_trim: Option<f64>,
    pub known_propensity: bool,
    pub alpha: f64,
    pub dominance: bool,
    pub group_col: Option<String>,
    pub eps0: f64,
    #[serde(flatten)]
    pub nuisance: NuisanceSettings,
}

const DEFAULT_H: [f64; 3] = [0.05, 0.01, 1e-9];

fn read_config(path: &std::path::Path) -> Result<(EstimateFile, NuisanceFile), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

/// Split config JSON into estimation and nuisance settings.
pub fn parse_config(text: &str) -> Result<(EstimateFile, NuisanceFile), CliError> {
    let bad = |e: serde_json::Error| usage(e.to_string());
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text).map_err(bad)?;
    let (nuis, est): (serde_json::Map<_, _>, serde_json::Map<_, _>) =
        map.into_iter().partition(|(k, _)| NUISANCE_KEYS.contains(&k.as_str()));
    Ok((
        serde_json::from_value(est.into()).map_err(bad)?,
        serde_json::from_value(nuis.into()).map_err(bad)?,
    ))
}

fn resolve(a: &EstimateArgs) -> Result<ResolvedEstimate, CliError> {
    let (file, nfile) = match &a.config {
        Some(p) => read_config(p)?,
        None => Default::default(),
    };
    let stratum = match &a.stratum {
        Some(s) => s.parse::<Stratum>()?,
        None => file.stratum.unwrap_or(Stratum::At),
    };
    let rho = match (&a.rho, file.rho) {
        (Some(s), _) => s.parse()?,
        (None, Some(RhoInput::Text(s))) => s.parse()?,
        (None, Some(RhoInput::Number(v))) => format!("{v}").parse()?,
        (None, None) => Rho::Auto,
    };
    let methods = if a.method.is_empty() {
        file.methods.unwrap_or_else(|| vec![MethodArg::Switch])
    } else {
        a.method.clone()
    };
    let h = if a.h.is_empty() {
        file.h.unwrap_or_else(|| DEFAULT_H.to_vec())
    } else {
        a.h.clone()
    };
    if methods.is_empty() {
        return Err(usage("no estimation method selected"));
    }
    if methods.contains(&MethodArg::Smooth) {
        if h.is_empty() {
            return Err(usage("the smooth estimator needs at least one --h value"));
        }
        if let Some(bad) = h.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(usage(format!("smoothing parameters must be positive, got {bad}")));
        }
    }
    Ok(ResolvedEstimate {
        data: a.data.clone(),
        methods,
        stratum,
        side: a.side.or(file.side).unwrap_or(SideArg::Both),
        h,
        rho,
        eps_trim: a.eps_trim.or(file.eps_trim),
        known_propensity: a.known_propensity || file.known_propensity.unwrap_or(false),
        alpha: a.alpha.or(file.alpha).unwrap_or(0.05),
        dominance: a.dominance || file.dominance.unwrap_or(false),
        group_col: a.group_col.clone().or(file.group_col),
        eps0: a.eps0.or(file.eps0).unwrap_or(1e-12),
        nuisance: NuisanceSettings::resolve(&a.nuisance, nfile)?,
    })
}

/// Per-group ends of a bound.
#[derive(Debug, Clone, Serialize)]
pub struct GroupRecord {
    pub lower: Option<GroupEstimate>,
    pub upper: Option<GroupEstimate>,
}

/// One estimator's output.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub method: &'static str,
    pub known_propensity: bool,
    pub h: Option<f64>,
    pub rho: Option<f64>,
    pub stratum: Stratum,
    pub side: SideArg,
    pub dominance: bool,
    pub estimate_lower: Option<f64>,
    pub estimate_upper: Option<f64>,
    pub se_lower: Option<f64>,
    pub se_upper: Option<f64>,
    pub ci_set: [Option<f64>; 2],
    pub ci_effect: [Option<f64>; 2],
    pub alpha: f64,
    pub n: usize,
    pub n_effective: usize,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<BTreeMap<String, GroupRecord>>,
}

/// The record for `est`, restricted to the requested side. A single side gets
/// a one-sided interval at level `1 − α`.
pub fn record(method: MethodArg, known: bool, est: &BoundsEstimate, side: SideArg) -> ResultRecord {
    let lo = est.lower;
    let hi = est.upper;
    let z1 = norm_quantile(1.0 - est.alpha);
    let (ci_set, ci_effect) = match side {
        SideArg::Both => (est.ci_set.map(Some), est.ci_effect.map(Some)),
        SideArg::L => (
            [Some(est.ci_set[0]), None],
            [lo.map(|e| e.estimate - z1 * e.se), None],
        ),
        SideArg::U => (
            [None, Some(est.ci_set[1])],
            [None, hi.map(|e| e.estimate + z1 * e.se)],
        ),
    };
    let keep_lo = side != SideArg::U;
    let keep_hi = side != SideArg::L;
    ResultRecord {
        method: method.name(),
        known_propensity: known,
        h: match est.method {
            strata_bounds::Method::Smooth { h } => Some(h),
            _ => None,
        },
        rho: est.diagnostics.rho,
        stratum: est.stratum,
        side,
        dominance: est.dominance,
        estimate_lower: lo.filter(|_| keep_lo).map(|e| e.estimate),
        estimate_upper: hi.filter(|_| keep_hi).map(|e| e.estimate),
        se_lower: lo.filter(|_| keep_lo).map(|e| e.se),
        se_upper: hi.filter(|_| keep_hi).map(|e| e.se),
        ci_set,
        ci_effect,
        alpha: est.alpha,
        n: est.n,
        n_effective: est.n_effective,
        diagnostics: est.diagnostics.clone(),
        groups: None,
    }
}

/// Run one estimator as configured.
pub fn run_method(
    table: &ObservationTable,
    bundle: &NuisanceBundle,
    cfg: &EstimationConfig,
    r: &ResolvedEstimate,
    method: MethodArg,
    h: Option<f64>,
) -> strata_bounds::Result<BoundsEstimate> {
    let rho = match r.rho {
        Rho::Auto => None,
        Rho::Value(v) => Some(v),
    };
    match method {
        MethodArg::Sharp => estimate_sharp(table, bundle, cfg),
        MethodArg::Trim => estimate_trim(table, bundle, cfg, r.eps_trim, r.known_propensity),
        MethodArg::Switch => estimate_switch(table, bundle, cfg, rho, r.known_propensity),
        MethodArg::Smooth => estimate_smooth(table, bundle, cfg, &GFamily::new(h.expect("smooth runs carry h"))?),
        MethodArg::Inefficient => estimate_inefficient(table, bundle, cfg),
    }
}

fn group_bounds(
    table: &ObservationTable,
    bundle: &NuisanceBundle,
    r: &ResolvedEstimate,
    method: MethodArg,
    labels: &[String],
) -> strata_bounds::Result<BTreeMap<String, GroupRecord>> {
    let (rule, known) = match method {
        MethodArg::Sharp => (RowRule::Sharp, false),
        MethodArg::Inefficient => (RowRule::Sharp, true),
        MethodArg::Trim => (RowRule::Trim { eps: r.eps_trim }, r.known_propensity),
        MethodArg::Switch => (
            RowRule::Switch {
                rho: match r.rho {
                    Rho::Auto => default_rho(table.n()),
                    Rho::Value(v) => v,
                },
            },
            r.known_propensity,
        ),
        MethodArg::Smooth => unreachable!("smooth runs have no group decomposition"),
    };
    let mut out: BTreeMap<String, GroupRecord> = BTreeMap::new();
    for side in [Side::Lower, Side::Upper] {
        if (side == Side::Lower && r.side == SideArg::U) || (side == Side::Upper && r.side == SideArg::L) {
            continue;
        }
        let spec = StratumSpec::new(r.stratum, side).with_dominance(r.dominance);
        let m = row_moments(table, bundle, &spec, rule, r.eps0, known)?;
        for (g, e) in heterogeneous_bounds(&m.rows, &m.weights, labels, 0.0)? {
            let slot = out.entry(g).or_insert(GroupRecord { lower: None, upper: None });
            match side {
                Side::Lower => slot.lower = Some(e),
                Side::Upper => slot.upper = Some(e),
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    resolved_config: &'a ResolvedEstimate,
    nuisance: NuisanceSummary,
    results: Vec<ResultRecord>,
}

#[derive(Serialize)]
struct NuisanceSummary {
    provenance: strata_bounds::nuisance::Provenance,
    n_clamped: usize,
    folds: Option<usize>,
}

pub fn cmd_estimate(a: EstimateArgs) -> Result<(), CliError> {
    let r = resolve(&a)?;
    let opts = ObservationOptions {
        weight_col: r.nuisance.weights_col.clone(),
        keep: r.group_col.iter().cloned().collect(),
    };
    let data = read_observations(crate::open(&r.data)?, &opts)?;
    let table = data.table;
    let report = validate(&table);
    if !report.passed() {
        return Err(CliError::Validation(report));
    }
    let mut bundle = r.nuisance.build(&table)?;
    if bundle.support().is_none() && r.stratum != Stratum::At {
        if let Some(s) = empirical_support(&table) {
            bundle = bundle.with_support(s);
        }
    }
    let needs_known = r.methods.contains(&MethodArg::Inefficient)
        || (r.known_propensity && r.methods.iter().any(|m| matches!(m, MethodArg::Trim | MethodArg::Switch)));
    if needs_known && !r.nuisance.known_propensity(&bundle) {
        return Err(usage(
            "known-propensity moments need the design propensity: pass --nuisance-file or --propensity",
        ));
    }
    let cfg = EstimationConfig {
        dominance: r.dominance,
        alpha: r.alpha,
        eps0: r.eps0,
        ..EstimationConfig::new(r.stratum)
    };
    let labels = r.group_col.as_ref().map(|g| data.extra[g].clone());
    let mut results = Vec::new();
    for &method in &r.methods {
        let hs: Vec<Option<f64>> = if method == MethodArg::Smooth {
            r.h.iter().map(|h| Some(*h)).collect()
        } else {
            vec![None]
        };
        let known = method == MethodArg::Inefficient
            || (r.known_propensity && matches!(method, MethodArg::Trim | MethodArg::Switch));
        for h in hs {
            let est = run_method(&table, &bundle, &cfg, &r, method, h)?;
            let mut rec = record(method, known, &est, r.side);
            if let Some(labels) = &labels {
                if method == MethodArg::Smooth {
                    log::warn!("subgroup bounds are not available for the smooth estimator");
                } else {
                    rec.groups = Some(group_bounds(&table, &bundle, &r, method, labels)?);
                }
            }
            results.push(rec);
        }
    }
    let mut out = crate::sink(a.output.as_deref())?;
    match a.format {
        Format::Json => {
            let doc = EstimateOutput {
                resolved_config: &r,
                nuisance: NuisanceSummary {
                    provenance: bundle.provenance(),
                    n_clamped: bundle.n_clamped(),
                    folds: bundle.folds().map(|f| f.k),
                },
                results,
            };
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| usage(e.to_string()))?;
            writeln!(out).map_err(strata_bounds::Error::from)?;
        }
        Format::Table => write_table(&mut out, &results).map_err(strata_bounds::Error::from)?,
    }
    out.flush().map_err(strata_bounds::Error::from)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn write_table(out: &mut dyn Write, results: &[ResultRecord]) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<22} {:>9} {:>9} {:>8} {:>8}  {:<22} {:<22}",
        "method", "lower", "upper", "se_l", "se_u", "identified set CI", "effect CI"
    )?;
    for r in results {
        let mut name = r.method.to_string();
        if let Some(h) = r.h {
            name.push_str(&format!(" h={h:e}"));
        }
        if r.known_propensity && r.method != "inefficient" {
            name.push_str(" (known)");
        }
        let ci = |c: [Option<f64>; 2]| format!("[{}, {}]", fmt_opt(c[0]), fmt_opt(c[1]));
        writeln!(
            out,
            "{:<22} {:>9} {:>9} {:>8} {:>8}  {:<22} {:<22}",
            name,
            fmt_opt(r.estimate_lower),
            fmt_opt(r.estimate_upper),
            fmt_opt(r.se_lower),
            fmt_opt(r.se_upper),
            ci(r.ci_set),
            ci(r.ci_effect)
        )?;
        if let Some(groups) = &r.groups {
            for (g, e) in groups {
                writeln!(
                    out,
                    "  group {:<14} {:>9} {:>9} {:>8} {:>8}",
                    g,
                    fmt_opt(e.lower.map(|x| x.estimate)),
                    fmt_opt(e.upper.map(|x| x.estimate)),
                    fmt_opt(e.lower.map(|x| x.se)),
                    fmt_opt(e.upper.map(|x| x.se)),
                )?;
            }
        }
    }
    Ok(())
}
