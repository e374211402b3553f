//! Influence functions of the bound ratios.
//!
//! Every moment is obtained from a [`BoundPlan`] by one composition rule.
//! Writing the numerator as `E[G(s0, s1, β₁, …, βₖ)]`,
//!
//! ```text
//! ψᴮ = G + ∂G/∂s0·ε0 + ∂G/∂s1·ε1 + Σₖ ∂G/∂βₖ·φₖ
//! ε0 = (1−D)/(1−m)·(S − s0),  ε1 = D/m·(S − s1)
//! ```
//!
//! where `φₖ` is the influence function of a trimmed mean of tail mass `a`,
//! threshold `q` and value `β` on arm `d` (`π₁ = m`, `π₀ = 1−m`):
//!
//! ```text
//! φ = 1{D=d}·S/(π_d·s_d·a)·[Y·1{tail} − a·β − q·(1{tail} − a)] + (q − β)/a·(∂a/∂s0·ε0 + ∂a/∂s1·ε1)
//! ```
//!
//! The share moment is `ψˢ = w + ∂w/∂s0·ε0 + ∂w/∂s1·ε1`.

use crate::data::{Arm, Partition, PartitionLabel, Side, Stratum, StratumSpec};
use crate::error::{Error, Result};
use crate::identification::{unconditional_sharp_bound, CovariateMeasure, RowNuisance};
use crate::law::Tail;
use crate::numeric::KahanSum;
use crate::plan::{bound_plan, smooth_plans, BoundPlan, Piece};
use crate::smoothing::GFamily;

/// The fields of one observation that enter the moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs {
    pub s: u8,
    pub d: u8,
    /// Outcome; only read when `s = 1`.
    pub y: f64,
}

/// Numerator and share contributions of one row: `ψ = ψᴮ − β·ψˢ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InfluenceRow {
    pub psi_b: f64,
    pub psi_s: f64,
}

impl InfluenceRow {
    pub fn psi(&self, beta: f64) -> f64 {
        self.psi_b - beta * self.psi_s
    }
}

/// The two ratio components of a smooth bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmoothInfluenceRow {
    pub plus: InfluenceRow,
    pub minus: InfluenceRow,
}

/// Selection scores `(ε0, ε1)`.
pub fn selection_scores(row: &RowNuisance<'_>, obs: Obs) -> (f64, f64) {
    let s = f64::from(obs.s);
    if obs.d == 1 {
        (0.0, (s - row.s1) / row.m)
    } else {
        ((s - row.s0) / (1.0 - row.m), 0.0)
    }
}

fn arm_prob(row: &RowNuisance<'_>, arm: Arm) -> (f64, f64) {
    match arm {
        Arm::Treated => (row.m, row.s1),
        Arm::Control => (1.0 - row.m, row.s0),
    }
}

/// Value of a piece and its influence function at one observation.
fn piece_influence(piece: &Piece, row: &RowNuisance<'_>, obs: Obs, eps: (f64, f64)) -> (f64, f64) {
    match *piece {
        Piece::Support { arm, tail } => (row.support_end(arm, tail), 0.0),
        Piece::Full { arm } => {
            let mu = row.law(arm).mean();
            if obs.s == 0 || obs.d != arm as u8 {
                return (mu, 0.0);
            }
            let (pi, sd) = arm_prob(row, arm);
            (mu, (obs.y - mu) / (pi * sd))
        }
        Piece::Trimmed { arm, tail, mass } => {
            let law = row.law(arm);
            let a = mass.v;
            let beta = law.tail_mean(tail, a);
            let q = match tail {
                Tail::Lower => law.quantile(a),
                Tail::Upper => law.quantile(1.0 - a),
            };
            let mut phi = (q - beta) / a * mass.dot(eps.0, eps.1);
            if obs.s == 1 && obs.d == arm as u8 {
                let inside = match tail {
                    Tail::Lower => obs.y <= q,
                    Tail::Upper => obs.y >= q,
                };
                let ind = f64::from(inside);
                let (pi, sd) = arm_prob(row, arm);
                phi += (obs.y * ind - a * beta - q * (ind - a)) / (pi * sd * a);
            }
            (beta, phi)
        }
    }
}

/// Influence contributions of a plan at one observation.
///
/// With `known_propensity`, the propensity-score augmentation
/// `Σₖ ∂G/∂βₖ·βₖ·(1 − 1{D=dₖ}/π_{dₖ})` is removed from `ψᴮ`.
pub fn plan_influence(plan: &BoundPlan, row: &RowNuisance<'_>, obs: Obs, known_propensity: bool) -> InfluenceRow {
    let eps = selection_scores(row, obs);
    let psi_s = plan.share.v + plan.share.dot(eps.0, eps.1);
    let w = plan.weight;
    if w.v == 0.0 && w.d0 == 0.0 && w.d1 == 0.0 {
        return InfluenceRow { psi_b: 0.0, psi_s };
    }
    let mut inner = 0.0;
    let mut lin = 0.0;
    let mut aug = 0.0;
    for t in &plan.terms {
        let (c, phi) = piece_influence(&t.piece, row, obs, eps);
        inner += t.coef * c;
        lin += t.coef * phi;
        if known_propensity {
            if let Piece::Full { arm } | Piece::Trimmed { arm, .. } = t.piece {
                let (pi, _) = arm_prob(row, arm);
                let hit = f64::from(obs.d == arm as u8);
                aug += t.coef * c * (1.0 - hit / pi);
            }
        }
    }
    let outer = plan.outer.eval(inner);
    let slope = plan.outer.derivative(inner) * w.v;
    let psi_b = w.v * outer + outer * w.dot(eps.0, eps.1) + slope * (lin - aug);
    InfluenceRow { psi_b, psi_s }
}

fn check_supported(spec: &StratumSpec) -> Result<()> {
    if spec.stratum == Stratum::Nt {
        return Err(Error::Unsupported(
            "never-taker bounds are support constants without an influence function".into(),
        ));
    }
    Ok(())
}

/// Efficient influence contributions of a regular (sharp) bound.
pub fn eif_regular_row(
    row: &RowNuisance<'_>,
    obs: Obs,
    label: &PartitionLabel,
    spec: &StratumSpec,
    index: usize,
) -> Result<InfluenceRow> {
    check_supported(spec)?;
    if label.label == Partition::Xzero {
        return Err(Error::Partition { row: index });
    }
    Ok(plan_influence(&bound_plan(row.s0, row.s1, spec, false), row, obs, false))
}

/// Known-propensity moment `ψ̃ᴮ = ψᴮ − E[w]·δ`, `ψˢ` unchanged.
pub fn inefficient_moment_row(
    row: &RowNuisance<'_>,
    obs: Obs,
    label: &PartitionLabel,
    spec: &StratumSpec,
    index: usize,
) -> Result<InfluenceRow> {
    check_supported(spec)?;
    if label.label == Partition::Xzero {
        return Err(Error::Partition { row: index });
    }
    Ok(plan_influence(&bound_plan(row.s0, row.s1, spec, false), row, obs, true))
}

/// Moment for rows treated as `p0 = 1`: untrimmed difference in conditional
/// means weighted by `min{s0,s1}` for always-takers; zero for strata that are
/// empty on that set.
pub fn degenerate_row(row: &RowNuisance<'_>, obs: Obs, spec: &StratumSpec, known_propensity: bool) -> Result<InfluenceRow> {
    check_supported(spec)?;
    Ok(plan_influence(&bound_plan(row.s0, row.s1, spec, true), row, obs, known_propensity))
}

/// Influence contributions of the smooth bound's four components.
pub fn eif_smooth_row(row: &RowNuisance<'_>, obs: Obs, family: &GFamily, side: Side, index: usize) -> Result<SmoothInfluenceRow> {
    let plans = smooth_plans(row.s0, row.s1, side, family, index)?;
    Ok(SmoothInfluenceRow {
        plus: plan_influence(&plans.plus, row, obs, false),
        minus: plan_influence(&plans.minus, row, obs, false),
    })
}

/// `E[f(W) | X=x]` by enumerating `(D, S)` and integrating `Y` against each arm's law.
///
/// `breaks[d]` lists outcome values where `f` may jump on arm `d`.
/// Returns `None` for laws that cannot be integrated.
pub fn conditional_expectation(
    row: &RowNuisance<'_>,
    breaks: [&[f64]; 2],
    f: &dyn Fn(Obs) -> f64,
) -> Option<f64> {
    let mut acc = KahanSum::default();
    for d in [0u8, 1u8] {
        let arm = Arm::from_d(d);
        let (pi, sd) = arm_prob(row, arm);
        acc.add(pi * (1.0 - sd) * f(Obs { s: 0, d, y: f64::NAN }));
        let ey = row
            .law(arm)
            .expect(&|y| f(Obs { s: 1, d, y }), breaks[arm.index()])?;
        acc.add(pi * sd * ey);
    }
    Some(acc.value())
}

/// Outcome values where the plan's influence function jumps, per arm.
pub fn plan_breaks(plan: &BoundPlan, row: &RowNuisance<'_>) -> [Vec<f64>; 2] {
    let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for t in &plan.terms {
        if let Piece::Trimmed { arm, tail, mass } = t.piece {
            let u = match tail {
                Tail::Lower => mass.v,
                Tail::Upper => 1.0 - mass.v,
            };
            out[arm.index()].push(row.law(arm).quantile(u));
        }
    }
    out
}

/// Efficient variance of a regular bound, `E[ψ²]/E[w]²`, by exact conditional
/// enumeration under the measure. Rows with `s0 = s1` use the untrimmed moment.
pub fn exact_variance<M: CovariateMeasure + ?Sized>(
    measure: &M,
    spec: &StratumSpec,
    known_propensity: bool,
) -> Result<f64> {
    check_supported(spec)?;
    let beta = unconditional_sharp_bound(measure, spec, None)?;
    let share = measure.expect(&|r| bound_plan(r.s0, r.s1, spec, false).share.v);
    let second = measure.expect(&|r| {
        let plan = bound_plan(r.s0, r.s1, spec, r.s0 == r.s1);
        let br = plan_breaks(&plan, r);
        conditional_expectation(r, [&br[0], &br[1]], &|o| {
            plan_influence(&plan, r, o, known_propensity).psi(beta).powi(2)
        })
        .unwrap_or(f64::NAN)
    });
    Ok(second / (share * share))
}

/// Semiparametric efficiency bound of the always-taker lower bound, summand
/// by summand in its closed form (trimmed variances, quantile and
/// heterogeneity terms on `X⁺` and `X⁻`), divided by `E[min{s0,s1}]²`.
pub fn efficiency_bound<M: CovariateMeasure + ?Sized>(measure: &M) -> Result<f64> {
    let spec = StratumSpec::at_lower();
    let beta = unconditional_sharp_bound(measure, &spec, None)?;
    let share = measure.expect(&|r| r.s0.min(r.s1));
    let total = measure.expect(&|r| {
        let (m, s0, s1) = (r.m, r.s0, r.s1);
        let p0 = s0 / s1;
        let l1 = r.law(Arm::Treated);
        let l0 = r.law(Arm::Control);
        let q1 = l1.quantile(p0.min(1.0));
        let q0 = l0.quantile((1.0 - 1.0 / p0).max(0.0));
        let var_trunc = |law: &crate::law::OutcomeLaw, keep: &dyn Fn(f64) -> bool, br: f64| {
            let m1 = law.expect(&|y| if keep(y) { y } else { 0.0 }, &[br]).unwrap_or(f64::NAN);
            let m2 = law
                .expect(&|y| if keep(y) { y * y } else { 0.0 }, &[br])
                .unwrap_or(f64::NAN);
            m2 - m1 * m1
        };
        let sig1 = var_trunc(l1, &|y| y <= q1, q1);
        let sig0 = var_trunc(l0, &|y| y >= q0, q0);
        let bx = crate::identification::conditional_sharp_bound(r, &spec);
        let dev = bx - beta;
        let mut v = s1 * sig1 / m + s0 * sig0 / (1.0 - m);
        if s1 > s0 {
            let b11 = l1.tail_mean(Tail::Lower, p0);
            v += dev * dev * s0 * (1.0 - s0 * m) / (1.0 - m);
            v += s1 * q1 * q1 * p0 * (1.0 - p0) / m;
            v += (q1 - b11).powi(2) * (s0 * (1.0 - s0) / (1.0 - m) + p0 * p0 * s1 * (1.0 - s1) / m);
            v -= 2.0 * q1 * b11 * s1 * p0 * (1.0 - p0) / m;
            v += 2.0 * dev * (q1 - b11) * s0 * (1.0 - s0) / (1.0 - m);
        } else if s0 > s1 {
            let ip = 1.0 / p0;
            let b00 = l0.tail_mean(Tail::Upper, ip);
            v += dev * dev * s1 * (1.0 - s1 + s1 * m) / m;
            v += s0 * q0 * q0 * ip * (1.0 - ip) / (1.0 - m);
            v += (q0 - b00).powi(2) * (ip * ip * s0 * (1.0 - s0) / (1.0 - m) + s1 * (1.0 - s1) / m);
            v -= 2.0 * q0 * b00 * s0 * ip * (1.0 - ip) / (1.0 - m);
            v -= 2.0 * dev * (q0 - b00) * s1 * (1.0 - s1) / m;
        }
        v
    });
    Ok(total / (share * share))
}

/// Excess variance of the known-propensity always-taker lower-bound estimator
/// over the efficient one. Rows with `s0 = s1` contribute through their
/// untrimmed means.
pub fn efficiency_gap<M: CovariateMeasure + ?Sized>(measure: &M) -> f64 {
    let share = measure.expect(&|r| r.s0.min(r.s1));
    let total = measure.expect(&|r| {
        let (m, s0, s1) = (r.m, r.s0, r.s1);
        let (a, b) = (((1.0 - m) / m).sqrt(), (m / (1.0 - m)).sqrt());
        let l1 = r.law(Arm::Treated);
        let l0 = r.law(Arm::Control);
        if s1 >= s0 {
            let c1 = l1.tail_mean(Tail::Lower, s0 / s1);
            let c0 = l0.mean();
            s0 * s0 * (c1 * a - c0 * b).powi(2)
        } else {
            let c1 = l1.mean();
            let c0 = l0.tail_mean(Tail::Upper, s1 / s0);
            s1 * s1 * (c1 * a - c0 * b).powi(2)
        }
    });
    total / (share * share)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::classify_partition;
    use crate::law::OutcomeLaw;

    fn mixture_row<'a>(l1: &'a OutcomeLaw, l0: &'a OutcomeLaw, s0: f64, s1: f64) -> RowNuisance<'a> {
        RowNuisance {
            m: 0.5,
            s0,
            s1,
            laws: [l0, l1],
            support: None,
        }
    }

    /// Always-taker lower-bound moment on X⁺ and X⁻ written out term by term.
    fn literal_at_lower(r: &RowNuisance<'_>, o: Obs) -> InfluenceRow {
        let (m, s0, s1) = (r.m, r.s0, r.s1);
        let (s, d, y) = (f64::from(o.s), f64::from(o.d), if o.s == 1 { o.y } else { 0.0 });
        let p0 = s0 / s1;
        let l1 = r.law(Arm::Treated);
        let l0 = r.law(Arm::Control);
        let (sd, sc) = (s * d / m, s * (1.0 - d) / (1.0 - m));
        if s1 > s0 {
            let q = l1.quantile(p0);
            let ind = f64::from(o.s == 1 && o.y <= q);
            let psi_b = sd * y * ind - sc * y - sd * q * (ind - p0)
                + q * ((1.0 - d) / (1.0 - m) * (s - s0) - p0 * d / m * (s - s1))
                + s0 * (l1.tail_mean(Tail::Lower, p0) * (1.0 - d / m)
                    - l0.mean() * (1.0 - (1.0 - d) / (1.0 - m)));
            InfluenceRow {
                psi_b,
                psi_s: s0 + (1.0 - d) * (s - s0) / (1.0 - m),
            }
        } else {
            let q = l0.quantile(1.0 - 1.0 / p0);
            let ind = f64::from(o.s == 1 && o.y >= q);
            let psi_b = sd * y - sc * y * ind - sc * q * (1.0 / p0 - ind)
                - q * (d / m * (s - s1) - (1.0 - d) / (1.0 - m) * (s - s0) / p0)
                + s1 * (l1.mean() * (1.0 - d / m)
                    - l0.tail_mean(Tail::Upper, 1.0 / p0) * (1.0 - (1.0 - d) / (1.0 - m)));
            InfluenceRow {
                psi_b,
                psi_s: s1 + d * (s - s1) / m,
            }
        }
    }

    #[test]
    fn composition_matches_literal_at_lower_moment() {
        let l1 = OutcomeLaw::uniform_mixture(&[(0.0, 1.0, 0.6), (1.0, 2.0, 0.4)]).unwrap();
        let l0 = OutcomeLaw::uniform_mixture(&[(-1.0, 0.5, 0.7), (0.5, 3.0, 0.3)]).unwrap();
        for (s0, s1, m) in [(0.4, 0.7, 0.3), (0.8, 0.5, 0.65)] {
            let mut r = mixture_row(&l1, &l0, s0, s1);
            r.m = m;
            let label = classify_partition(s0, s1, 0.0).unwrap();
            for o in [
                Obs { s: 0, d: 0, y: f64::NAN },
                Obs { s: 0, d: 1, y: f64::NAN },
                Obs { s: 1, d: 1, y: 0.2 },
                Obs { s: 1, d: 1, y: 1.7 },
                Obs { s: 1, d: 0, y: -0.5 },
                Obs { s: 1, d: 0, y: 2.5 },
            ] {
                let a = eif_regular_row(&r, o, &label, &StratumSpec::at_lower(), 0).unwrap();
                let b = literal_at_lower(&r, o);
                assert!((a.psi_b - b.psi_b).abs() < 1e-12, "{o:?}: {} vs {}", a.psi_b, b.psi_b);
                assert!((a.psi_s - b.psi_s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditional_means_recover_weighted_bounds() {
        let l1 = OutcomeLaw::uniform_mixture(&[(0.0, 1.0, 0.6), (1.0, 2.0, 0.4)]).unwrap();
        let l0 = OutcomeLaw::uniform_mixture(&[(-1.0, 0.5, 0.7), (0.2, 3.0, 0.3)]).unwrap();
        for (s0, s1) in [(0.4, 0.7), (0.8, 0.5)] {
            let r = mixture_row(&l1, &l0, s0, s1);
            for stratum in [Stratum::At, Stratum::C, Stratum::Def, Stratum::Em] {
                for side in [Side::Lower, Side::Upper] {
                    for dom in [false, true] {
                        let spec = StratumSpec::new(stratum, side).with_dominance(dom);
                        let plan = bound_plan(s0, s1, &spec, false);
                        let br = plan_breaks(&plan, &r);
                        for known in [false, true] {
                            let eb = conditional_expectation(&r, [&br[0], &br[1]], &|o| {
                                plan_influence(&plan, &r, o, known).psi_b
                            })
                            .unwrap();
                            let es = conditional_expectation(&r, [&br[0], &br[1]], &|o| {
                                plan_influence(&plan, &r, o, known).psi_s
                            })
                            .unwrap();
                            assert!((eb - plan.value(&r)).abs() < 1e-9, "{spec:?}");
                            assert!((es - plan.share.v).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn xzero_rows_are_rejected() {
        let l = OutcomeLaw::Point(0.0);
        let r = mixture_row(&l, &l, 0.5, 0.5);
        let label = classify_partition(0.5, 0.5, 0.0).unwrap();
        let o = Obs { s: 1, d: 1, y: 0.0 };
        assert_eq!(
            eif_regular_row(&r, o, &label, &StratumSpec::at_lower(), 7),
            Err(Error::Partition { row: 7 })
        );
        assert!(degenerate_row(&r, o, &StratumSpec::at_lower(), false).is_ok());
    }

    #[test]
    fn unselected_row_keeps_only_augmentation_terms() {
        let l1 = OutcomeLaw::uniform_mixture(&[(0.0, 1.0, 1.0)]).unwrap();
        let l0 = OutcomeLaw::Point(0.0);
        let r = mixture_row(&l1, &l0, 0.3, 0.6);
        let label = classify_partition(0.3, 0.6, 0.0).unwrap();
        let o = Obs { s: 0, d: 0, y: f64::NAN };
        let row = eif_regular_row(&r, o, &label, &StratumSpec::at_lower(), 0).unwrap();
        // Only q·(S − s0)/(1−m) and s0·β11·(1 − D/m) survive.
        let (q, b11) = (0.5, 0.25);
        let expected = q * (-0.3) / 0.5 + 0.3 * b11;
        assert!((row.psi_b - expected).abs() < 1e-14);
        assert!((row.psi_s - (0.3 - 0.3 / 0.5)).abs() < 1e-14);
    }

    #[test]
    fn linear_in_beta() {
        let row = InfluenceRow { psi_b: 1.3, psi_s: 0.4 };
        let slope = row.psi(2.0) - row.psi(1.0);
        assert!((slope + 0.4).abs() < 1e-15);
    }
}
