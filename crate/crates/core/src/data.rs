//! Core domain types: the observation table, partition labels, estimand
//! specifications and the estimate record.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control = 0,
    Treated = 1,
}

impl Arm {
    pub fn from_d(d: u8) -> Self {
        if d == 1 {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The estimation sample `(Y·S, S, D, X)` with observation weights.
///
/// Outcomes of unselected rows are stored as NaN and never read; use
/// [`ObservationTable::sy`] to get `S·Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    y: Vec<f64>,
    s: Vec<u8>,
    d: Vec<u8>,
    /// Row-major covariates, `n × p`.
    x: Vec<f64>,
    p: usize,
    weight: Vec<f64>,
    covariate_names: Vec<String>,
}

impl ObservationTable {
    /// Assemble a table; only shapes are checked here, content rules live in [`validate`].
    pub fn new(
        y: Vec<f64>,
        s: Vec<u8>,
        d: Vec<u8>,
        x: Vec<Vec<f64>>,
        weight: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = y.len();
        if s.len() != n || d.len() != n || x.len() != n {
            return Err(Error::Invalid(format!(
                "column lengths differ: y={n}, s={}, d={}, x={}",
                s.len(),
                d.len(),
                x.len()
            )));
        }
        let p = x.first().map_or(0, Vec::len);
        if let Some(bad) = x.iter().position(|r| r.len() != p) {
            return Err(Error::Invalid(format!(
                "row {bad} has {} covariates, expected {p}",
                x[bad].len()
            )));
        }
        let weight = weight.unwrap_or_else(|| vec![1.0; n]);
        if weight.len() != n {
            return Err(Error::Invalid("weight column length differs".into()));
        }
        let y = y
            .into_iter()
            .zip(&s)
            .map(|(v, si)| if *si == 0 { f64::NAN } else { v })
            .collect();
        Ok(ObservationTable {
            y,
            s,
            d,
            x: x.into_iter().flatten().collect(),
            p,
            weight,
            covariate_names: (1..=p).map(|j| format!("x{j}")).collect(),
        })
    }

    pub fn with_covariate_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(Error::Invalid("covariate name count differs from p".into()));
        }
        self.covariate_names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn s(&self, i: usize) -> u8 {
        self.s[i]
    }

    pub fn d(&self, i: usize) -> u8 {
        self.d[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weight[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Outcome of a selected row.
    pub fn y(&self, i: usize) -> f64 {
        debug_assert!(self.s[i] == 1, "outcome read on unselected row {i}");
        self.y[i]
    }

    /// `S·Y`, zero on unselected rows.
    pub fn sy(&self, i: usize) -> f64 {
        if self.s[i] == 1 {
            self.y[i]
        } else {
            0.0
        }
    }

    /// Raw outcome column (NaN where unselected).
    pub fn y_raw(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Sub-table of the given rows, in order.
    pub fn subset(&self, rows: &[usize]) -> ObservationTable {
        let mut x = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            x.extend_from_slice(self.x(i));
        }
        ObservationTable {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            s: rows.iter().map(|&i| self.s[i]).collect(),
            d: rows.iter().map(|&i| self.d[i]).collect(),
            x,
            p: self.p,
            weight: rows.iter().map(|&i| self.weight[i]).collect(),
            covariate_names: self.covariate_names.clone(),
        }
    }
}

/// A failed validation rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleFailure {
    pub rule: &'static str,
    pub row: Option<usize>,
    pub message: String,
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub failures: Vec<RuleFailure>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            return Ok(());
        }
        let msg = self
            .failures
            .iter()
            .take(5)
            .map(|f| match f.row {
                Some(r) => format!("{} (row {r})", f.rule),
                None => f.rule.to_string(),
            })
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Invalid(format!(
            "{} validation failure(s): {msg}",
            self.failures.len()
        )))
    }
}

/// Check the table's content rules; every violation is reported.
pub fn validate(table: &ObservationTable) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut fail = |rule: &'static str, row: Option<usize>, message: String| {
        report.failures.push(RuleFailure { rule, row, message })
    };
    if table.n() == 0 {
        fail("empty table", None, "no rows".into());
    }
    for i in 0..table.n() {
        if table.s[i] > 1 {
            fail("selection not binary", Some(i), format!("s = {}", table.s[i]));
        }
        if table.d[i] > 1 {
            fail("treatment not binary", Some(i), format!("d = {}", table.d[i]));
        }
        if table.s[i] == 1 && !table.y[i].is_finite() {
            fail(
                "outcome missing under selection",
                Some(i),
                "s = 1 but y is missing or non-finite".into(),
            );
        }
        let w = table.weight[i];
        if !(w >= 0.0) || !w.is_finite() {
            fail("negative weight", Some(i), format!("weight = {w}"));
        }
        if table.x(i).iter().any(|v| v.is_nan()) {
            fail("NaN covariate", Some(i), "covariate vector contains NaN".into());
        }
    }
    let total: f64 = table.weight.iter().filter(|w| w.is_finite()).sum();
    if table.n() > 0 && !(total > 0.0) {
        fail("zero total weight", None, "weights sum to zero".into());
    }
    report
}

/// Covariate partition by the sign of `s1 − s0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partition {
    Xplus,
    Xzero,
    Xminus,
}

/// Partition label of a row together with its relative selection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionLabel {
    pub label: Partition,
    pub p0: f64,
    pub tolerance: f64,
}

/// Classify `(s0, s1)` with absolute tolerance `eps0` on `s1 − s0`.
pub fn classify_partition(s0: f64, s1: f64, eps0: f64) -> Result<PartitionLabel> {
    if !(s0 > 0.0 && s0 < 1.0 && s1 > 0.0 && s1 < 1.0) {
        return Err(Error::Domain(format!(
            "selection probabilities must lie in (0,1), got s0={s0}, s1={s1}"
        )));
    }
    if !(eps0 >= 0.0) {
        return Err(Error::Domain(format!("tolerance must be nonnegative, got {eps0}")));
    }
    let diff = s1 - s0;
    let label = if diff.abs() <= eps0 {
        Partition::Xzero
    } else if diff > 0.0 {
        Partition::Xplus
    } else {
        Partition::Xminus
    };
    Ok(PartitionLabel {
        label,
        p0: s0 / s1,
        tolerance: eps0,
    })
}

/// Principal stratum, by potential selection `(S(0), S(1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    /// Always-takers (1,1).
    At,
    /// Compliers (0,1).
    C,
    /// Defiers (1,0).
    Def,
    /// Never-takers (0,0).
    Nt,
    /// Extensive margin: compliers and defiers together.
    Em,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stratum::At => "at",
            Stratum::C => "c",
            Stratum::Def => "def",
            Stratum::Nt => "nt",
            Stratum::Em => "em",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Stratum {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "at" => Ok(Stratum::At),
            "c" => Ok(Stratum::C),
            "def" => Ok(Stratum::Def),
            "nt" => Ok(Stratum::Nt),
            "em" => Ok(Stratum::Em),
            other => Err(Error::Invalid(format!("unknown stratum '{other}'"))),
        }
    }
}

/// Bound side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "l")]
    Lower,
    #[serde(rename = "u")]
    Upper,
}

/// Which estimand a computation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StratumSpec {
    pub stratum: Stratum,
    pub side: Side,
    /// Mean-dominance refinement.
    pub dominance: bool,
}

impl StratumSpec {
    pub fn new(stratum: Stratum, side: Side) -> Self {
        StratumSpec {
            stratum,
            side,
            dominance: false,
        }
    }

    pub fn with_dominance(mut self, on: bool) -> Self {
        self.dominance = on;
        self
    }

    pub fn at_lower() -> Self {
        StratumSpec::new(Stratum::At, Side::Lower)
    }
}

/// Smoothing family. Only log-sum-exp is built in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    #[default]
    LogSumExp,
}

/// Smoothing parameter and family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub h: f64,
    #[serde(default)]
    pub family: FamilyKind,
    /// Check that trimming fractions stay positive before evaluating.
    #[serde(default = "yes")]
    pub derivative_cap_check: bool,
}

fn yes() -> bool {
    true
}

impl SmoothingConfig {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Invalid(format!("smoothing parameter must be positive, got {h}")));
        }
        Ok(SmoothingConfig {
            h,
            family: FamilyKind::LogSumExp,
            derivative_cap_check: true,
        })
    }
}

/// Estimation method tag recorded on every estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Method {
    Sharp,
    Trim { known_propensity: bool },
    Switch { known_propensity: bool },
    Smooth { h: f64 },
    InefficientKnownPs,
}

/// Point estimate and standard error for one end of the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndEstimate {
    pub estimate: f64,
    pub se: f64,
}

/// Auxiliary quantities reported with an estimate.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    /// Weighted share of rows labelled Xzero.
    pub share_xzero: f64,
    /// Rows switched to the untrimmed moment.
    pub n_switched: usize,
    /// Rows removed by trimming.
    pub n_trimmed: usize,
    /// Denominator (share) estimates, one per ratio.
    pub denominators: Vec<f64>,
    /// Rows whose nuisances were clamped at the overlap floors.
    pub n_clamped: usize,
    /// Switching threshold, when applicable.
    pub rho: Option<f64>,
}

/// Bounds estimate with standard errors and confidence intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsEstimate {
    pub method: Method,
    pub stratum: Stratum,
    pub dominance: bool,
    pub lower: Option<EndEstimate>,
    pub upper: Option<EndEstimate>,
    pub alpha: f64,
    /// Confidence interval for the identified set (ends at `z_{1−α/2}`).
    pub ci_set: [f64; 2],
    /// Imbens–Manski interval for the parameter.
    pub ci_effect: [f64; 2],
    pub n: usize,
    pub n_effective: usize,
    pub diagnostics: Diagnostics,
}
