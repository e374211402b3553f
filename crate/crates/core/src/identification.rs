//! Population sharp bounds: conditional bounds, stratum weights and their
//! aggregation over a covariate distribution.

use crate::data::{Arm, StratumSpec};
use crate::error::{Error, Result};
use crate::law::{OutcomeLaw, Tail};
use crate::numeric::KahanSum;
use crate::plan::{bound_plan, stratum_weight_dual};
use serde::{Deserialize, Serialize};

/// Outcome support limits per arm (index 0 = control, 1 = treated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBounds {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl SupportBounds {
    pub fn new(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        for k in 0..2 {
            if lower[k].is_nan() || upper[k].is_nan() || lower[k] > upper[k] {
                return Err(Error::Invalid(format!(
                    "support for arm {k} must satisfy lower ≤ upper, got [{}, {}]",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(SupportBounds { lower, upper })
    }

    pub fn unbounded() -> Self {
        SupportBounds {
            lower: [f64::NEG_INFINITY; 2],
            upper: [f64::INFINITY; 2],
        }
    }
}

/// Nuisance values at one covariate point.
#[derive(Debug, Clone, Copy)]
pub struct RowNuisance<'a> {
    pub m: f64,
    pub s0: f64,
    pub s1: f64,
    /// Outcome laws given `S=1, D=d, X=x`, indexed by arm.
    pub laws: [&'a OutcomeLaw; 2],
    /// Support limits; when absent each law's own support is used.
    pub support: Option<SupportBounds>,
}

impl<'a> RowNuisance<'a> {
    pub fn law(&self, arm: Arm) -> &'a OutcomeLaw {
        self.laws[arm.index()]
    }

    pub fn support_end(&self, arm: Arm, tail: Tail) -> f64 {
        match (self.support, tail) {
            (Some(s), Tail::Lower) => s.lower[arm.index()],
            (Some(s), Tail::Upper) => s.upper[arm.index()],
            (None, Tail::Lower) => self.law(arm).quantile(0.0),
            (None, Tail::Upper) => self.law(arm).quantile(1.0),
        }
    }

    pub fn p0(&self) -> f64 {
        self.s0 / self.s1
    }
}

/// A distribution over covariate points, exposed through expectations.
pub trait CovariateMeasure {
    /// `E[f(η(X))]` under the measure.
    fn expect(&self, f: &dyn Fn(&RowNuisance<'_>) -> f64) -> f64;
}

/// Stratum weight: AT `min{s0,s1}`, C `(s1−s0)⁺`, DEF `(s0−s1)⁺`, NT `1−max`, EM `|s1−s0|`.
pub fn stratum_weight(s0: f64, s1: f64, spec: &StratumSpec) -> f64 {
    stratum_weight_dual(s0, s1, spec.stratum, false).v
}

/// Conditional sharp bound `β_B(x)`; non-finite when it needs an infinite support limit.
pub fn conditional_sharp_bound(row: &RowNuisance<'_>, spec: &StratumSpec) -> f64 {
    let spec = spec.with_dominance(false);
    bound_plan(row.s0, row.s1, &spec, false).inner_value(row)
}

/// Conditional bound under mean dominance.
pub fn conditional_dominance_bound(row: &RowNuisance<'_>, spec: &StratumSpec) -> f64 {
    let spec = spec.with_dominance(true);
    bound_plan(row.s0, row.s1, &spec, false).inner_value(row)
}

/// Numerator and share of the unconditional bound.
pub fn sharp_components<M: CovariateMeasure + ?Sized>(measure: &M, spec: &StratumSpec) -> (f64, f64) {
    let num = measure.expect(&|row| bound_plan(row.s0, row.s1, spec, false).value(row));
    let den = measure.expect(&|row| stratum_weight(row.s0, row.s1, spec));
    (num, den)
}

/// Unconditional bound `E[β_B(X)·w(X)] / E[w(X)]`; `floor` (default 0) guards the share.
pub fn unconditional_sharp_bound<M: CovariateMeasure + ?Sized>(
    measure: &M,
    spec: &StratumSpec,
    floor: Option<f64>,
) -> Result<f64> {
    let (num, den) = sharp_components(measure, spec);
    let floor = floor.unwrap_or(0.0);
    if !(den > floor) {
        return Err(Error::zero_share(den, floor));
    }
    Ok(num / den)
}

/// A finite covariate distribution with explicit nuisances, handy for exact checks.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    pub points: Vec<DiscretePoint>,
    pub support: Option<SupportBounds>,
}

/// One support point of a [`DiscreteMeasure`].
#[derive(Debug, Clone)]
pub struct DiscretePoint {
    pub prob: f64,
    pub m: f64,
    pub s0: f64,
    pub s1: f64,
    pub laws: [OutcomeLaw; 2],
}

impl DiscretePoint {
    pub fn row(&self, support: Option<SupportBounds>) -> RowNuisance<'_> {
        RowNuisance {
            m: self.m,
            s0: self.s0,
            s1: self.s1,
            laws: [&self.laws[0], &self.laws[1]],
            support,
        }
    }
}

impl CovariateMeasure for DiscreteMeasure {
    fn expect(&self, f: &dyn Fn(&RowNuisance<'_>) -> f64) -> f64 {
        let mut acc = KahanSum::default();
        for p in &self.points {
            if p.prob > 0.0 {
                acc.add(p.prob * f(&p.row(self.support)));
            }
        }
        acc.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Side, Stratum};

    fn row<'a>(s0: f64, s1: f64, l1: &'a OutcomeLaw, l0: &'a OutcomeLaw) -> RowNuisance<'a> {
        RowNuisance {
            m: 0.5,
            s0,
            s1,
            laws: [l0, l1],
            support: None,
        }
    }

    #[test]
    fn weights() {
        let at = StratumSpec::new(Stratum::At, Side::Lower);
        let em = StratumSpec::new(Stratum::Em, Side::Lower);
        let c = StratumSpec::new(Stratum::C, Side::Lower);
        let def = StratumSpec::new(Stratum::Def, Side::Lower);
        let nt = StratumSpec::new(Stratum::Nt, Side::Lower);
        assert_eq!(stratum_weight(0.3, 0.7, &at), 0.3);
        assert!((stratum_weight(0.3, 0.7, &em) - 0.4).abs() < 1e-15);
        assert_eq!(stratum_weight(0.5, 0.5, &c), 0.0);
        assert_eq!(stratum_weight(0.3, 0.7, &def), 0.0);
        assert!((stratum_weight(0.3, 0.7, &nt) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn equal_selection_gives_untrimmed_difference() {
        let l1 = OutcomeLaw::uniform_mixture(&[(0.0, 2.0, 1.0)]).unwrap();
        let l0 = OutcomeLaw::Normal { mean: 0.25, sd: 1.0 };
        let r = row(0.4, 0.4, &l1, &l0);
        for side in [Side::Lower, Side::Upper] {
            let b = conditional_sharp_bound(&r, &StratumSpec::new(Stratum::At, side));
            assert!((b - 0.75).abs() < 1e-14);
            let d = conditional_dominance_bound(&r, &StratumSpec::new(Stratum::At, side));
            assert!((d - b).abs() < 1e-14);
        }
    }

    #[test]
    fn mixture_row_values() {
        // x1 = 1, x2 = 0 in the benchmark design: s0 = Φ(0), s1 = Φ(1).
        let s0 = 0.5;
        let s1 = crate::numeric::norm_cdf(1.0);
        let p0 = s0 / s1;
        let l1 = OutcomeLaw::uniform_mixture(&[(0.0, 1.0, p0), (1.0, 2.0, 1.0 - p0)]).unwrap();
        let l0 = OutcomeLaw::Point(0.0);
        let r = row(s0, s1, &l1, &l0);
        let at = StratumSpec::at_lower();
        assert!((conditional_sharp_bound(&r, &at) - 0.5).abs() < 1e-14);
        let dom = conditional_dominance_bound(&r, &at);
        assert!((dom - (p0 * 0.5 + (1.0 - p0) * 1.5)).abs() < 1e-14);
        assert!(dom >= conditional_sharp_bound(&r, &at));
        let up = conditional_sharp_bound(&r, &StratumSpec::new(Stratum::At, Side::Upper));
        let r = 2.0 * p0 - 1.0;
        let expected = ((1.0 - p0) * 1.5 + r * (1.0 - r / (2.0 * p0))) / p0;
        assert!((up - expected).abs() < 1e-14);
    }

    #[test]
    fn never_takers_need_finite_support() {
        let l = OutcomeLaw::Normal { mean: 0.0, sd: 1.0 };
        let r = row(0.3, 0.6, &l, &l);
        let nt = StratumSpec::new(Stratum::Nt, Side::Lower);
        assert!(!conditional_sharp_bound(&r, &nt).is_finite());
        let mut r2 = r;
        r2.support = Some(SupportBounds::new([-1.0, -2.0], [3.0, 4.0]).unwrap());
        assert_eq!(conditional_sharp_bound(&r2, &nt), -2.0 - 3.0);
    }

    #[test]
    fn single_point_measure_is_its_conditional_bound() {
        let p = DiscretePoint {
            prob: 1.0,
            m: 0.5,
            s0: 0.3,
            s1: 0.6,
            laws: [
                OutcomeLaw::Normal { mean: 0.0, sd: 1.0 },
                OutcomeLaw::Normal { mean: 1.0, sd: 1.0 },
            ],
        };
        let cond = conditional_sharp_bound(&p.row(None), &StratumSpec::at_lower());
        let m = DiscreteMeasure {
            points: vec![p],
            support: None,
        };
        let unc = unconditional_sharp_bound(&m, &StratumSpec::at_lower(), None).unwrap();
        assert!((unc - cond).abs() < 1e-15);
    }
}
