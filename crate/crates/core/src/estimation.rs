//! Ratio estimators of the bounds, their standard errors and intervals.
//!
//! Every bound end is a ratio `Ē[ψᴮ]/Ē[ψˢ]` of weighted sample means of the
//! per-row influence contributions. The estimators differ only in which moment
//! each row receives:
//!
//! * sharp: regular moments, exact `p0 = 1` rows get the untrimmed moment;
//! * trim: rows near `p0 = 1` are removed;
//! * switch: rows within `ρ` of `p0 = 1` get the untrimmed moment;
//! * smooth: the smoothed bound's two ratios;
//! * inefficient: regular moments without the propensity augmentation.

use crate::data::{
    BoundsEstimate, Diagnostics, EndEstimate, Method, ObservationTable, Partition, Side, Stratum, StratumSpec,
};
use crate::error::{Error, Result};
use crate::identification::RowNuisance;
use crate::influence::{eif_smooth_row, plan_influence, InfluenceRow, Obs, SmoothInfluenceRow};
use crate::nuisance::{empirical_support, NuisanceBundle};
use crate::numeric::{norm_cdf, norm_quantile, KahanSum};
use crate::plan::bound_plan;
use crate::smoothing::GFamily;
use serde::Serialize;
use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt::Display;

/// Settings shared by all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub stratum: Stratum,
    pub dominance: bool,
    pub alpha: f64,
    /// Tolerance for the Xzero label.
    pub eps0: f64,
    /// Shares at or below this are rejected.
    pub share_floor: f64,
}

impl EstimationConfig {
    pub fn new(stratum: Stratum) -> Self {
        EstimationConfig {
            stratum,
            dominance: false,
            alpha: 0.05,
            eps0: 1e-12,
            share_floor: 0.0,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Invalid(format!("alpha must lie in (0, 1/2), got {}", self.alpha)));
        }
        if !(self.eps0 >= 0.0) {
            return Err(Error::Invalid("eps0 must be nonnegative".into()));
        }
        Ok(())
    }

    fn spec(&self, side: Side) -> StratumSpec {
        StratumSpec::new(self.stratum, side).with_dominance(self.dominance)
    }
}

/// Default switching threshold `n^{-1/4} / log n`.
pub fn default_rho(n: usize) -> f64 {
    let n = n as f64;
    n.powf(-0.25) / n.ln()
}

/// `β̂ = Σwψᴮ/Σwψˢ` with the linearized standard error.
pub fn ratio_estimate(rows: &[InfluenceRow], weights: &[f64], floor: f64) -> Result<EndEstimate> {
    if rows.len() != weights.len() {
        return Err(Error::Invalid("influence rows and weights differ in length".into()));
    }
    let (mut num, mut den, mut wsum) = (KahanSum::default(), KahanSum::default(), KahanSum::default());
    for (r, w) in rows.iter().zip(weights) {
        if *w > 0.0 {
            num.add(w * r.psi_b);
            den.add(w * r.psi_s);
            wsum.add(*w);
        }
    }
    let share = den.value() / wsum.value();
    if !(share > floor) {
        return Err(Error::zero_share(share, floor));
    }
    let beta = num.value() / den.value();
    let mut ss = KahanSum::default();
    for (r, w) in rows.iter().zip(weights) {
        if *w > 0.0 {
            let e = w * r.psi(beta);
            ss.add(e * e);
        }
    }
    Ok(EndEstimate {
        estimate: beta,
        se: ss.value().sqrt() / den.value(),
    })
}

fn share_of(rows: &[InfluenceRow], weights: &[f64]) -> f64 {
    let (mut den, mut wsum) = (KahanSum::default(), KahanSum::default());
    for (r, w) in rows.iter().zip(weights) {
        if *w > 0.0 {
            den.add(w * r.psi_s);
            wsum.add(*w);
        }
    }
    den.value() / wsum.value()
}

/// Sum of two ratios with the joint delta-method standard error.
pub fn smooth_ratio_estimate(rows: &[SmoothInfluenceRow], weights: &[f64], floor: f64) -> Result<(EndEstimate, [f64; 2])> {
    let plus: Vec<InfluenceRow> = rows.iter().map(|r| r.plus).collect();
    let minus: Vec<InfluenceRow> = rows.iter().map(|r| r.minus).collect();
    let a = ratio_estimate(&plus, weights, floor)?;
    let b = ratio_estimate(&minus, weights, floor)?;
    let (sa, sb) = (share_of(&plus, weights), share_of(&minus, weights));
    let mut ss = KahanSum::default();
    let mut wsum = KahanSum::default();
    for (r, w) in rows.iter().zip(weights) {
        if *w > 0.0 {
            let e = w * (r.plus.psi(a.estimate) / sa + r.minus.psi(b.estimate) / sb);
            ss.add(e * e);
            wsum.add(*w);
        }
    }
    Ok((
        EndEstimate {
            estimate: a.estimate + b.estimate,
            se: ss.value().sqrt() / wsum.value(),
        },
        [sa, sb],
    ))
}

/// Critical value `C` of the Imbens–Manski interval.
///
/// Solves `Φ(C + Δ/σ) − Φ(−C) = 1 − α` with `σ` the larger standard error.
pub fn imbens_manski_critical(width: f64, se_max: f64, alpha: f64) -> f64 {
    let z = norm_quantile(1.0 - alpha / 2.0);
    let k = if se_max > 0.0 {
        width.max(0.0) / se_max
    } else if width > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let f = |c: f64| {
        let hi = if k.is_infinite() { 1.0 } else { norm_cdf(c + k) };
        hi - norm_cdf(-c) - (1.0 - alpha)
    };
    let (mut lo, mut hi) = (0.0, z);
    if f(lo) >= 0.0 {
        return lo;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Imbens–Manski interval for the parameter.
pub fn imbens_manski_interval(lower: f64, upper: f64, se_lower: f64, se_upper: f64, alpha: f64) -> [f64; 2] {
    let c = imbens_manski_critical(upper - lower, se_lower.max(se_upper), alpha);
    [lower - c * se_lower, upper + c * se_upper]
}

/// Interval covering the whole identified set.
pub fn identified_set_interval(lower: f64, upper: f64, se_lower: f64, se_upper: f64, alpha: f64) -> [f64; 2] {
    let z = norm_quantile(1.0 - alpha / 2.0);
    [lower - z * se_lower, upper + z * se_upper]
}

fn obs(table: &ObservationTable, i: usize) -> Obs {
    Obs {
        s: table.s(i),
        d: table.d(i),
        y: table.sy(i),
    }
}

fn needs_support(stratum: Stratum) -> bool {
    stratum != Stratum::At
}

/// The bundle, with empirical outcome support filled in when the stratum needs it.
fn with_default_support<'a>(table: &ObservationTable, bundle: &'a NuisanceBundle, stratum: Stratum) -> Cow<'a, NuisanceBundle> {
    if bundle.support().is_none() && needs_support(stratum) {
        if let Some(s) = empirical_support(table) {
            log::info!("using the empirical outcome range as support bounds");
            return Cow::Owned(bundle.clone().with_support(s));
        }
    }
    Cow::Borrowed(bundle)
}

fn check_sizes(table: &ObservationTable, bundle: &NuisanceBundle) -> Result<()> {
    if table.n() != bundle.n() {
        return Err(Error::Invalid(format!(
            "data has {} rows but nuisances have {}",
            table.n(),
            bundle.n()
        )));
    }
    Ok(())
}

fn share_xzero(table: &ObservationTable, bundle: &NuisanceBundle, eps0: f64) -> Result<f64> {
    let (mut z, mut w) = (KahanSum::default(), KahanSum::default());
    for i in 0..table.n() {
        let wi = table.weight(i);
        if bundle.label(i, eps0)?.label == Partition::Xzero {
            z.add(wi);
        }
        w.add(wi);
    }
    Ok(z.value() / w.value())
}

/// How each row is treated by the regular-moment estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowRule {
    /// Exact Xzero rows (by label) use the untrimmed moment.
    Sharp,
    /// Rows with `|p0 − 1| ≤ ρ` use the untrimmed moment.
    Switch { rho: f64 },
    /// Rows flagged by the trim set are removed. `eps = None` uses the Xzero label.
    Trim { eps: Option<f64> },
}

/// Per-row influence contributions with their effective weights.
#[derive(Debug, Clone)]
pub struct RowMoments {
    pub rows: Vec<InfluenceRow>,
    pub weights: Vec<f64>,
    /// Rows given the untrimmed moment.
    pub n_switched: usize,
    /// Rows removed or zeroed by trimming.
    pub n_trimmed: usize,
    /// Standard-error multiplier `√(Σw / Σw_kept)`; above one only when trimmed
    /// rows stay in the share but not in the effective sample size.
    pub se_scale: f64,
}

/// Influence contributions of one bound end under a row rule.
///
/// Trimming with `known_propensity` removes rows entirely. Without it the
/// trimmed rows drop out of the numerator only and still enter the share,
/// while the standard error counts only the kept rows as the sample size.
/// The point estimate is then unbiased but the interval is conservative
/// whenever many rows sit at `p0 = 1`.
pub fn row_moments(
    table: &ObservationTable,
    bundle: &NuisanceBundle,
    spec: &StratumSpec,
    rule: RowRule,
    eps0: f64,
    known_propensity: bool,
) -> Result<RowMoments> {
    check_sizes(table, bundle)?;
    if spec.stratum == Stratum::Nt {
        return Err(Error::Unsupported(
            "never-taker bounds are support constants without an influence function".into(),
        ));
    }
    let n = table.n();
    let mut rows = Vec::with_capacity(n);
    let mut weights = table.weights().to_vec();
    let (mut n_switched, mut n_trimmed, mut n_disagree) = (0, 0, 0);
    let (mut w_all, mut w_kept) = (KahanSum::default(), KahanSum::default());
    for i in 0..n {
        let row: RowNuisance<'_> = bundle.row(i);
        let label = bundle.label(i, eps0)?;
        let near_one = (row.p0() - 1.0).abs();
        let o = obs(table, i);
        let regular = |deg: bool| plan_influence(&bound_plan(row.s0, row.s1, spec, deg), &row, o, known_propensity);
        let r = match rule {
            RowRule::Sharp => {
                if label.label == Partition::Xzero {
                    n_switched += 1;
                    regular(true)
                } else {
                    regular(false)
                }
            }
            RowRule::Switch { rho } => {
                if label.label == Partition::Xzero || near_one <= rho {
                    n_switched += 1;
                    if (row.s1 - row.s0).abs() > rho {
                        n_disagree += 1;
                    }
                    regular(true)
                } else {
                    regular(false)
                }
            }
            RowRule::Trim { eps } => {
                let trimmed = match eps {
                    None => label.label == Partition::Xzero,
                    Some(e) => label.label == Partition::Xzero || near_one <= e,
                };
                w_all.add(table.weight(i));
                if !trimmed {
                    w_kept.add(table.weight(i));
                }
                if trimmed {
                    n_trimmed += 1;
                    if known_propensity {
                        weights[i] = 0.0;
                        InfluenceRow::default()
                    } else {
                        InfluenceRow {
                            psi_b: 0.0,
                            ..regular(true)
                        }
                    }
                } else {
                    regular(false)
                }
            }
        };
        rows.push(r);
    }
    if n_disagree > 0 {
        log::debug!("{n_disagree} switched rows have selection probabilities differing by more than rho");
    }
    if matches!(rule, RowRule::Trim { .. }) && n_trimmed == n {
        return Err(Error::AllTrimmed);
    }
    let se_scale = match rule {
        RowRule::Trim { .. } if !known_propensity => (w_all.value() / w_kept.value()).sqrt(),
        _ => 1.0,
    };
    Ok(RowMoments {
        rows,
        weights,
        n_switched,
        n_trimmed,
        se_scale,
    })
}

fn assemble(
    method: Method,
    cfg: &EstimationConfig,
    lower: EndEstimate,
    upper: EndEstimate,
    n: usize,
    n_effective: usize,
    diagnostics: Diagnostics,
) -> BoundsEstimate {
    BoundsEstimate {
        method,
        stratum: cfg.stratum,
        dominance: cfg.dominance,
        lower: Some(lower),
        upper: Some(upper),
        alpha: cfg.alpha,
        ci_set: identified_set_interval(lower.estimate, upper.estimate, lower.se, upper.se, cfg.alpha),
        ci_effect: imbens_manski_interval(lower.estimate, upper.estimate, lower.se, upper.se, cfg.alpha),
        n,
        n_effective,
        diagnostics,
    }
}

/// Never-taker bounds: support constants, exact given the support.
fn never_taker_estimate(
    table: &ObservationTable,
    bundle: &NuisanceBundle,
    cfg: &EstimationConfig,
    method: Method,
) -> Result<BoundsEstimate> {
    check_sizes(table, bundle)?;
    let b = with_default_support(table, bundle, Stratum::Nt);
    let support = b
        .support()
        .ok_or_else(|| Error::Invalid("never-taker bounds need outcome support bounds".into()))?;
    let mut den = KahanSum::default();
    for i in 0..table.n() {
        den.add(table.weight(i) * (1.0 - b.s0(i).max(b.s1(i))));
    }
    let share = den.value() / table.weights().iter().sum::<f64>();
    if !(share > cfg.share_floor) {
        return Err(Error::zero_share(share, cfg.share_floor));
    }
    let end = |v: f64| EndEstimate { estimate: v, se: 0.0 };
    let lower = end(support.lower[1] - support.upper[0]);
    let upper = end(support.upper[1] - support.lower[0]);
    let diagnostics = Diagnostics {
        share_xzero: share_xzero(table, &b, cfg.eps0)?,
        denominators: vec![share, share],
        n_clamped: b.n_clamped(),
        ..Diagnostics::default()
    };
    let n_eff = table.weights().iter().filter(|w| **w > 0.0).count();
    Ok(assemble(method, cfg, lower, upper, table.n(), n_eff, diagnostics))
}

fn regular_estimate(
    table: &ObservationTable,
    bundle: &NuisanceBundle,
    cfg: &EstimationConfig,
    rule: RowRule,
    known_propensity: bool,
    method: Method,
) -> Result<BoundsEstimate> {
    cfg.check()?;
    if cfg.stratum == Stratum::Nt {
        return never_taker_estimate(table, bundle, cfg, method);
    }
    check_sizes(table, bundle)?;
    let b = with_default_support(table, bundle, cfg.stratum);
    let mut ends = Vec::with_capacity(2);
    let mut dens = Vec::with_capacity(2);
    let mut last = None;
    for side in [Side::Lower, Side::Upper] {
        let m = row_moments(table, &b, &cfg.spec(side), rule, cfg.eps0, known_propensity)?;
        let mut e = ratio_estimate(&m.rows, &m.weights, cfg.share_floor).map_err(|e| annotate(e, side))?;
        e.se *= m.se_scale;
        dens.push(share_of(&m.rows, &m.weights));
        ends.push(e);
        last = Some(m);
    }
    let m = last.expect("two sides");
    let diagnostics = Diagnostics {
        share_xzero: share_xzero(table, &b, cfg.eps0)?,
        n_switched: m.n_switched,
        n_trimmed: m.n_trimmed,
        denominators: dens,
        n_clamped: b.n_clamped(),
        rho: match rule {
            RowRule::Switch { rho } => Some(rho),
            _ => None,
        },
    };
    let zeroed = if matches!(rule, RowRule::Trim { .. }) && !known_propensity {
        m.n_trimmed
    } else {
        0
    };
    let n_eff = m.weights.iter().filter(|w| **w > 0.0).count() - zeroed;
    Ok(assemble(method, cfg, ends[0], ends[1], table.n(), n_eff, diagnostics))
}

fn annotate(e: Error, side: Side) -> Error {
    match e {
        Error::ZeroShare { share, floor, .. } => Error::ZeroShare {
            share,
            floor,
            context: Some(format!("{side:?} bound").to_lowercase()),
        },
        other => other,
    }
}

/// Regular moments with exact `p0 = 1` rows switched to the untrimmed moment.
pub fn estimate_sharp(table: &ObservationTable, bundle: &NuisanceBundle, cfg: &EstimationConfig) -> Result<BoundsEstimate> {
    regular_estimate(table, bundle, cfg, RowRule::Sharp, false, Method::Sharp)
}

/// Drop rows with `|p̂0 − 1| ≤ eps_trim` (default: the Xzero label).
pub fn estimate_trim(
    table: &ObservationTable,
    bundle: &NuisanceBundle,
    cfg: &EstimationConfig,
    eps_trim: Option<f64>,
    known_propensity: bool,
) -> Result<BoundsEstimate> {
    regular_estimate(
        table,
        bundle,
        cfg,
        RowRule::Trim { eps: eps_trim },
        known_propensity,
        Method::Trim { known_propensity },
    )
}

/// Untrimmed moment for rows within `rho` of `p̂0 = 1` (default `n^{-1/4}/log n`).
pub fn estimate_switch(
    table: &ObservationTable,
    bundle: &NuisanceBundle,
    cfg: &EstimationConfig,
    rho: Option<f64>,
    known_propensity: bool,
) -> Result<BoundsEstimate> {
    let rho = rho.unwrap_or_else(|| default_rho(table.n()));
    if !(rho >= 0.0) {
        return Err(Error::Invalid(format!("rho must be nonnegative, got {rho}")));
    }
    regular_estimate(
        table,
        bundle,
        cfg,
        RowRule::Switch { rho },
        known_propensity,
        Method::Switch { known_propensity },
    )
}

/// Known-propensity moments: no truncated-mean augmentation.
pub fn estimate_inefficient(table: &ObservationTable, bundle: &NuisanceBundle, cfg: &EstimationConfig) -> Result<BoundsEstimate> {
    regular_estimate(table, bundle, cfg, RowRule::Sharp, true, Method::InefficientKnownPs)
}

/// Per-row smooth influence contributions for one side.
pub fn smooth_row_moments(
    table: &ObservationTable,
    bundle: &NuisanceBundle,
    family: &GFamily,
    side: Side,
) -> Result<Vec<SmoothInfluenceRow>> {
    check_sizes(table, bundle)?;
    (0..table.n())
        .map(|i| eif_smooth_row(&bundle.row(i), obs(table, i), family, side, i))
        .collect()
}

/// Smooth always-taker bounds.
pub fn estimate_smooth(
    table: &ObservationTable,
    bundle: &NuisanceBundle,
    cfg: &EstimationConfig,
    family: &GFamily,
) -> Result<BoundsEstimate> {
    cfg.check()?;
    if cfg.stratum != Stratum::At || cfg.dominance {
        return Err(Error::Unsupported(
            "smooth bounds are defined for always-takers without dominance".into(),
        ));
    }
    let mut ends = Vec::with_capacity(2);
    let mut dens = Vec::with_capacity(4);
    for side in [Side::Lower, Side::Upper] {
        let rows = smooth_row_moments(table, bundle, family, side)?;
        let (e, d) = smooth_ratio_estimate(&rows, table.weights(), cfg.share_floor).map_err(|e| annotate(e, side))?;
        ends.push(e);
        dens.extend(d);
    }
    let diagnostics = Diagnostics {
        share_xzero: share_xzero(table, bundle, cfg.eps0)?,
        denominators: dens,
        n_clamped: bundle.n_clamped(),
        ..Diagnostics::default()
    };
    let n_eff = table.weights().iter().filter(|w| **w > 0.0).count();
    Ok(assemble(
        Method::Smooth { h: family.h },
        cfg,
        ends[0],
        ends[1],
        table.n(),
        n_eff,
        diagnostics,
    ))
}

/// Per-group bound with the group's share of the total `ψˢ` mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupEstimate {
    pub estimate: f64,
    pub se: f64,
    pub share: f64,
}

/// Ratio estimates within covariate groups.
pub fn heterogeneous_bounds<K: Ord + Clone + Display>(
    rows: &[InfluenceRow],
    weights: &[f64],
    groups: &[K],
    floor: f64,
) -> Result<BTreeMap<K, GroupEstimate>> {
    if rows.len() != groups.len() || rows.len() != weights.len() {
        return Err(Error::Invalid("groups, rows and weights differ in length".into()));
    }
    let mut members: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.clone()).or_default().push(i);
    }
    let total = ksum_s(rows, weights, 0..rows.len());
    let mut out = BTreeMap::new();
    for (g, idx) in members {
        let r: Vec<InfluenceRow> = idx.iter().map(|&i| rows[i]).collect();
        let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
        let e = ratio_estimate(&r, &w, floor).map_err(|e| match e {
            Error::ZeroShare { share, floor, .. } => Error::ZeroShare {
                share,
                floor,
                context: Some(format!("group {g}")),
            },
            other => other,
        })?;
        out.insert(
            g,
            GroupEstimate {
                estimate: e.estimate,
                se: e.se,
                share: ksum_s(rows, weights, idx.into_iter()) / total,
            },
        );
    }
    Ok(out)
}

fn ksum_s(rows: &[InfluenceRow], weights: &[f64], idx: impl Iterator<Item = usize>) -> f64 {
    let mut acc = KahanSum::default();
    for i in idx {
        if weights[i] > 0.0 {
            acc.add(weights[i] * rows[i].psi_s);
        }
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(b: &[f64], s: &[f64]) -> Vec<InfluenceRow> {
        b.iter().zip(s).map(|(b, s)| InfluenceRow { psi_b: *b, psi_s: *s }).collect()
    }

    #[test]
    fn unit_share_gives_weighted_mean() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let w = [1.0, 2.0, 1.0, 0.5];
        let e = ratio_estimate(&rows(&x, &[1.0; 4]), &w, 0.0).unwrap();
        let ws: f64 = w.iter().sum();
        let mean = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / ws;
        let se = x.iter().zip(&w).map(|(a, b)| (b * (a - mean)).powi(2)).sum::<f64>().sqrt() / ws;
        assert!((e.estimate - mean).abs() < 1e-14);
        assert!((e.se - se).abs() < 1e-14);
    }

    #[test]
    fn proportional_moments_have_zero_se() {
        let s = [0.2, 0.5, 0.9];
        let b: Vec<f64> = s.iter().map(|v| 3.0 * v).collect();
        let e = ratio_estimate(&rows(&b, &s), &[1.0; 3], 0.0).unwrap();
        assert!((e.estimate - 3.0).abs() < 1e-15);
        assert!(e.se < 1e-15);
    }

    #[test]
    fn zero_share_is_rejected() {
        let r = rows(&[1.0, 1.0], &[0.5, -0.5]);
        assert!(matches!(ratio_estimate(&r, &[1.0; 2], 0.0), Err(Error::ZeroShare { .. })));
    }

    #[test]
    fn critical_value_limits() {
        assert!((imbens_manski_critical(0.0, 1.0, 0.05) - 1.959963984540054).abs() < 1e-9);
        assert!((imbens_manski_critical(1e3, 1.0, 0.05) - 1.6448536269514722).abs() < 1e-9);
        assert!((imbens_manski_critical(1.0, 0.0, 0.05) - 1.6448536269514722).abs() < 1e-9);
        let c = imbens_manski_critical(0.3, 0.2, 0.05);
        assert!(c > 1.6448 && c < 1.96);
        let lhs = norm_cdf(c + 1.5) - norm_cdf(-c);
        assert!((lhs - 0.95).abs() < 1e-10);
    }

    #[test]
    fn groups_recombine() {
        let r = rows(&[1.0, 2.0, 0.5, 3.0, 0.1], &[0.4, 0.6, 0.3, 0.9, 0.2]);
        let w = [1.0, 1.0, 2.0, 1.0, 1.0];
        let g = [1, 2, 1, 2, 3];
        let all = ratio_estimate(&r, &w, 0.0).unwrap();
        let parts = heterogeneous_bounds(&r, &w, &g, 0.0).unwrap();
        let combined: f64 = parts.values().map(|p| p.share * p.estimate).sum();
        assert!((combined - all.estimate).abs() < 1e-14);
        let one = heterogeneous_bounds(&r, &w, &[0; 5], 0.0).unwrap();
        assert!((one[&0].estimate - all.estimate).abs() < 1e-15);
        assert!((one[&0].se - all.se).abs() < 1e-15);
    }
}
