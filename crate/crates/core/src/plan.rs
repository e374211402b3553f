//! Bound functionals as explicit recipes.
//!
//! A conditional bound is written as `weight(s0,s1) · outer(Σ coef·βₖ)` where
//! each `βₖ` is a trimmed mean of one arm's outcome law whose tail mass is a
//! differentiable function of `(s0, s1)`. The same recipe is evaluated in the
//! population (identification, smoothing) and differentiated to get influence
//! functions, so both always describe the same estimand.

use crate::data::{Arm, Side, Stratum, StratumSpec};
use crate::error::{Error, Result};
use crate::identification::RowNuisance;
use crate::law::Tail;
use crate::smoothing::GFamily;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A value with its partial derivatives in `(s0, s1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d0: f64,
    pub d1: f64,
}

impl Dual {
    pub const fn constant(v: f64) -> Self {
        Dual { v, d0: 0.0, d1: 0.0 }
    }

    pub const fn s0(v: f64) -> Self {
        Dual { v, d0: 1.0, d1: 0.0 }
    }

    pub const fn s1(v: f64) -> Self {
        Dual { v, d0: 0.0, d1: 1.0 }
    }

    /// Chain rule through a scalar function with derivative `df`.
    pub fn map(self, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Self {
        let g = df(self.v);
        Dual {
            v: f(self.v),
            d0: g * self.d0,
            d1: g * self.d1,
        }
    }

    /// Directional derivative along the selection scores.
    pub fn dot(&self, eps0: f64, eps1: f64) -> f64 {
        self.d0 * eps0 + self.d1 * eps1
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d0: self.d0 + o.d0,
            d1: self.d1 + o.d1,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        self + (-o)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d0: -self.d0,
            d1: -self.d1,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d0: self.d0 * o.v + self.v * o.d0,
            d1: self.d1 * o.v + self.v * o.d1,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        Dual {
            v: self.v * inv,
            d0: (self.d0 - self.v * inv * o.d0) * inv,
            d1: (self.d1 - self.v * inv * o.d1) * inv,
        }
    }
}

/// One ingredient of a conditional bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    /// Untrimmed conditional mean of an arm.
    Full { arm: Arm },
    /// Trimmed mean keeping the given tail of mass `mass ∈ (0,1)`.
    Trimmed { arm: Arm, tail: Tail, mass: Dual },
    /// Support end of an arm (a trimmed mean of vanishing mass).
    Support { arm: Arm, tail: Tail },
}

impl Piece {
    /// Trimmed mean with the mass clipped to `[0,1]`; the ends collapse to a
    /// full mean or a support limit.
    pub fn trimmed(arm: Arm, tail: Tail, mass: Dual) -> Piece {
        if mass.v >= 1.0 {
            Piece::Full { arm }
        } else if mass.v <= 0.0 {
            Piece::Support { arm, tail }
        } else {
            Piece::Trimmed { arm, tail, mass }
        }
    }

    pub fn value(&self, row: &RowNuisance<'_>) -> f64 {
        match *self {
            Piece::Full { arm } => row.law(arm).mean(),
            Piece::Trimmed { arm, tail, mass } => row.law(arm).tail_mean(tail, mass.v),
            Piece::Support { arm, tail } => row.support_end(arm, tail),
        }
    }
}

/// Signed piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub piece: Piece,
}

/// Outer transformation applied to the conditional bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outer {
    Identity,
    /// `g_i` of a smoothing family.
    G(u8, GFamily),
}

impl Outer {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Outer::Identity => z,
            Outer::G(i, f) => f.eval(*i, z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Outer::Identity => 1.0,
            Outer::G(i, f) => f.derivative(*i, z),
        }
    }
}

/// Numerator `weight·outer(Σ coef·piece)` over denominator `share`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundPlan {
    pub terms: Vec<Term>,
    pub outer: Outer,
    pub weight: Dual,
    pub share: Dual,
}

impl BoundPlan {
    /// The conditional bound `Σ coef·piece` (before the outer map).
    pub fn inner_value(&self, row: &RowNuisance<'_>) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.piece.value(row))
            .sum()
    }

    /// Numerator integrand `weight·outer(bound)`; zero weight wins over
    /// non-finite bounds.
    pub fn value(&self, row: &RowNuisance<'_>) -> f64 {
        if self.weight.v == 0.0 {
            return 0.0;
        }
        self.weight.v * self.outer.eval(self.inner_value(row))
    }

    fn zero() -> Self {
        BoundPlan {
            terms: Vec::new(),
            outer: Outer::Identity,
            weight: Dual::constant(0.0),
            share: Dual::constant(0.0),
        }
    }
}

/// Stratum weight with its gradient.
pub fn stratum_weight_dual(s0: f64, s1: f64, stratum: Stratum, degenerate: bool) -> Dual {
    let (a, b) = (Dual::s0(s0), Dual::s1(s1));
    match stratum {
        Stratum::At => {
            if s0 <= s1 {
                a
            } else {
                b
            }
        }
        Stratum::C if !degenerate && s1 > s0 => b - a,
        Stratum::Def if !degenerate && s0 > s1 => a - b,
        Stratum::Em if !degenerate && s1 > s0 => b - a,
        Stratum::Em if !degenerate && s0 > s1 => a - b,
        Stratum::Nt => {
            if s0 >= s1 {
                Dual::constant(1.0) - a
            } else {
                Dual::constant(1.0) - b
            }
        }
        _ => Dual::constant(0.0),
    }
}

use Arm::{Control as A0, Treated as A1};
use Tail::{Lower as Lo, Upper as Up};

/// Recipe for the sharp (or mean-dominance) conditional bound at `(s0, s1)`.
///
/// With `degenerate = true` the row is treated as `p0 = 1`: no trimming, and
/// the complier/defier weights vanish.
pub fn bound_plan(s0: f64, s1: f64, spec: &StratumSpec, degenerate: bool) -> BoundPlan {
    let weight = stratum_weight_dual(s0, s1, spec.stratum, degenerate);
    let p = Dual::s0(s0) / Dual::s1(s1);
    let one = Dual::constant(1.0);
    let (min_p, min_inv) = if degenerate {
        (one, one)
    } else {
        (
            if p.v < 1.0 { p } else { one },
            if p.v > 1.0 { one / p } else { one },
        )
    };
    let t = |coef: f64, arm: Arm, tail: Tail, mass: Dual| Term {
        coef,
        piece: Piece::trimmed(arm, tail, mass),
    };
    let sup = |coef: f64, arm: Arm, tail: Tail| Term {
        coef,
        piece: Piece::Support { arm, tail },
    };
    let full = Dual::constant(1.0);
    let terms = match (spec.stratum, spec.side, spec.dominance) {
        (Stratum::Nt, Side::Lower, _) => vec![sup(1.0, A1, Lo), sup(-1.0, A0, Up)],
        (Stratum::Nt, Side::Upper, _) => vec![sup(1.0, A1, Up), sup(-1.0, A0, Lo)],
        (Stratum::At, Side::Lower, false) => {
            vec![t(1.0, A1, Lo, min_p), t(-1.0, A0, Up, min_inv)]
        }
        (Stratum::At, Side::Upper, false) => {
            vec![t(1.0, A1, Up, min_p), t(-1.0, A0, Lo, min_inv)]
        }
        (Stratum::At, Side::Lower, true) => vec![t(1.0, A1, Lo, full), t(-1.0, A0, Up, min_inv)],
        (Stratum::At, Side::Upper, true) => vec![t(1.0, A1, Up, min_p), t(-1.0, A0, Lo, full)],
        (_, Side::Lower, false) => {
            vec![t(1.0, A1, Lo, one - min_p), t(-1.0, A0, Up, one - min_inv)]
        }
        (_, Side::Upper, false) => {
            vec![t(1.0, A1, Up, one - min_p), t(-1.0, A0, Lo, one - min_inv)]
        }
        (_, Side::Lower, true) => vec![t(1.0, A1, Lo, one - min_p), t(-1.0, A0, Up, full)],
        (_, Side::Upper, true) => vec![t(1.0, A1, Up, full), t(-1.0, A0, Lo, one - min_inv)],
    };
    if weight.v == 0.0 && weight.d0 == 0.0 && weight.d1 == 0.0 {
        return BoundPlan {
            terms,
            ..BoundPlan::zero()
        };
    }
    BoundPlan {
        terms,
        outer: Outer::Identity,
        weight,
        share: weight,
    }
}

/// The two ratio components of a smooth bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothPlan {
    pub plus: BoundPlan,
    pub minus: BoundPlan,
}

impl SmoothPlan {
    pub fn inner_value(&self, row: &RowNuisance<'_>) -> f64 {
        self.plus.inner_value(row)
    }
}

/// Recipes for the smooth bound components at `(s0, s1)`.
///
/// Lower: `g4(β)·g1(p0)·s1 / g3(p0)·s1` plus `g5(β)·g3(p0)·s1 / g1(p0)·s1`.
/// Upper: `g2(β)·g3(p0)·s1 / g1(p0)·s1` plus `g6(β)·g1(p0)·s1 / g3(p0)·s1`.
pub fn smooth_plans(s0: f64, s1: f64, side: Side, fam: &GFamily, row: usize) -> Result<SmoothPlan> {
    let p = Dual::s0(s0) / Dual::s1(s1);
    let inv = Dual::s1(s1) / Dual::s0(s0);
    let g1 = |z: Dual| z.map(|v| fam.g1(v), |v| fam.derivative(1, v));
    let g3 = |z: Dual| z.map(|v| fam.g3(v), |v| fam.derivative(3, v));
    let (a, b) = (g1(p), g1(inv));
    for m in [a.v, b.v] {
        if !(m > 0.0) {
            return Err(Error::DegenerateTrim { row, value: m });
        }
    }
    let s1d = Dual::s1(s1);
    let w1 = a * s1d;
    let w3 = g3(p) * s1d;
    let terms = match side {
        Side::Lower => vec![
            Term {
                coef: 1.0,
                piece: Piece::trimmed(A1, Lo, a),
            },
            Term {
                coef: -1.0,
                piece: Piece::trimmed(A0, Up, b),
            },
        ],
        Side::Upper => vec![
            Term {
                coef: 1.0,
                piece: Piece::trimmed(A1, Up, a),
            },
            Term {
                coef: -1.0,
                piece: Piece::trimmed(A0, Lo, b),
            },
        ],
    };
    let (gp, wp, sp, gm, wm, sm) = match side {
        Side::Lower => (4, w1, w3, 5, w3, w1),
        Side::Upper => (2, w3, w1, 6, w1, w3),
    };
    Ok(SmoothPlan {
        plus: BoundPlan {
            terms: terms.clone(),
            outer: Outer::G(gp, *fam),
            weight: wp,
            share: sp,
        },
        minus: BoundPlan {
            terms,
            outer: Outer::G(gm, *fam),
            weight: wm,
            share: sm,
        },
    })
}
