//! Smooth surrogates of `min{z,1}`, `max{z,0}` and `min{z,0}` built from the
//! scaled softplus `g(z) = h·log(1 + e^{z/h})`, and the smooth outer bounds
//! they induce.

use crate::data::{FamilyKind, Side, SmoothingConfig};
use crate::error::{Error, Result};
use crate::identification::{CovariateMeasure, RowNuisance};
use crate::plan::{smooth_plans, SmoothPlan};
use std::f64::consts::LN_2;

/// The six smoothing functions for one bandwidth.
///
/// * `g1 ≤ min{z,1} ≤ g3`, `g3 = g1 + h·log 2`
/// * `g4 ≤ max{z,0} ≤ g2`, `g4 = g2 − h·log 2`
/// * `g5(z) = −g2(−z)` and `g6(z) = −g4(−z)` approximate `min{z,0}`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GFamily {
    pub h: f64,
    pub kind: FamilyKind,
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl GFamily {
    pub fn new(h: f64) -> Result<Self> {
        let cfg = SmoothingConfig::new(h)?;
        Ok(GFamily::from_config(&cfg))
    }

    pub fn from_config(cfg: &SmoothingConfig) -> Self {
        GFamily {
            h: cfg.h,
            kind: cfg.family,
        }
    }

    /// `h·log(1 + e^{z/h})` in overflow-safe form.
    pub fn softplus(&self, z: f64) -> f64 {
        z.max(0.0) + self.h * (-(z.abs() / self.h)).exp().ln_1p()
    }

    pub fn g1(&self, z: f64) -> f64 {
        1.0 - self.softplus(1.0 - z)
    }

    pub fn g2(&self, z: f64) -> f64 {
        self.softplus(z)
    }

    pub fn g3(&self, z: f64) -> f64 {
        self.g1(z) + self.h * LN_2
    }

    pub fn g4(&self, z: f64) -> f64 {
        self.softplus(z) - self.h * LN_2
    }

    pub fn g5(&self, z: f64) -> f64 {
        -self.g2(-z)
    }

    pub fn g6(&self, z: f64) -> f64 {
        -self.g4(-z)
    }

    /// `g_i(z)` for `i ∈ 1..=6`.
    pub fn eval(&self, i: u8, z: f64) -> f64 {
        match i {
            1 => self.g1(z),
            2 => self.g2(z),
            3 => self.g3(z),
            4 => self.g4(z),
            5 => self.g5(z),
            6 => self.g6(z),
            _ => panic!("g-family index {i} out of range 1..=6"),
        }
    }

    /// `g_i'(z)`.
    pub fn derivative(&self, i: u8, z: f64) -> f64 {
        match i {
            1 | 3 => logistic((1.0 - z) / self.h),
            2 | 4 => logistic(z / self.h),
            5 | 6 => logistic(-z / self.h),
            _ => panic!("g-family index {i} out of range 1..=6"),
        }
    }

    /// The nonsmooth function `g_i` approximates.
    pub fn limit(i: u8, z: f64) -> f64 {
        match i {
            1 | 3 => z.min(1.0),
            2 | 4 => z.max(0.0),
            5 | 6 => z.min(0.0),
            _ => panic!("g-family index {i} out of range 1..=6"),
        }
    }
}

/// Smooth conditional bound: lower `β₁₁(x, g1(p0)) − β₀₀(x, 1 − g1(1/p0))`,
/// upper `β₀₁(x, 1 − g1(p0)) − β₁₀(x, g1(1/p0))`.
pub fn smooth_conditional_bound(row: &RowNuisance<'_>, side: Side, family: &GFamily) -> Result<f64> {
    let plans = smooth_plans(row.s0, row.s1, side, family, 0)?;
    Ok(plans.inner_value(row))
}

/// The four population expectations behind a smooth unconditional bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothComponents {
    pub num_plus: f64,
    pub den_plus: f64,
    pub num_minus: f64,
    pub den_minus: f64,
}

impl SmoothComponents {
    pub fn value(&self) -> f64 {
        self.num_plus / self.den_plus + self.num_minus / self.den_minus
    }
}

/// Population components of the smooth bound under a covariate measure.
pub fn smooth_components<M: CovariateMeasure + ?Sized>(
    measure: &M,
    side: Side,
    family: &GFamily,
) -> Result<SmoothComponents> {
    let err = std::sync::Mutex::new(None::<Error>);
    let comp = |k: usize| {
        measure.expect(&|row: &RowNuisance<'_>| {
            match smooth_plans(row.s0, row.s1, side, family, 0) {
                Ok(p) => component_value(&p, row, k),
                Err(e) => {
                    err.lock().expect("poisoned").get_or_insert(e);
                    f64::NAN
                }
            }
        })
    };
    let out = SmoothComponents {
        num_plus: comp(0),
        den_plus: comp(1),
        num_minus: comp(2),
        den_minus: comp(3),
    };
    if let Some(e) = err.into_inner().expect("poisoned") {
        return Err(e);
    }
    for den in [out.den_plus, out.den_minus] {
        if !(den > 0.0) {
            return Err(Error::zero_share(den, 0.0));
        }
    }
    Ok(out)
}

fn component_value(p: &SmoothPlan, row: &RowNuisance<'_>, k: usize) -> f64 {
    match k {
        0 => p.plus.value(row),
        1 => p.plus.share.v,
        2 => p.minus.value(row),
        _ => p.minus.share.v,
    }
}

/// Smooth unconditional bound `β_{B,h}` under a covariate measure.
pub fn smooth_unconditional_bound<M: CovariateMeasure + ?Sized>(
    measure: &M,
    side: Side,
    family: &GFamily,
) -> Result<f64> {
    Ok(smooth_components(measure, side, family)?.value())
}

/// `|β_{B,h} − β_B|` for each `h` on the grid.
pub fn approximation_error_curve<M: CovariateMeasure + ?Sized>(
    measure: &M,
    side: Side,
    h_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let spec = crate::data::StratumSpec::new(crate::data::Stratum::At, side);
    let sharp = crate::identification::unconditional_sharp_bound(measure, &spec, None)?;
    h_grid
        .iter()
        .map(|&h| {
            let fam = GFamily::new(h)?;
            let v = smooth_unconditional_bound(measure, side, &fam)?;
            Ok((h, (v - sharp).abs()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_values() {
        let f = GFamily::new(0.05).unwrap();
        assert!((f.g1(1.0) - (1.0 - 0.05 * LN_2)).abs() < 1e-15);
        assert!((f.g2(0.0) - 0.05 * LN_2).abs() < 1e-15);
        assert!(f.g4(0.0).abs() < 1e-15);
        assert_eq!(f.derivative(2, 0.0), 0.5);
        assert_eq!(f.derivative(1, 1.0), 0.5);
        let f = GFamily::new(0.15).unwrap();
        assert!(f.g1(0.7) < 0.7);
        assert!(0.7 - f.g1(0.7) <= 0.15 * LN_2);
    }

    #[test]
    fn tiny_h_is_stable() {
        let f = GFamily::new(1e-9).unwrap();
        for z in [-5.0, -1e-3, 0.0, 0.3, 1.0, 7.0] {
            for i in 1..=6 {
                let v = f.eval(i, z);
                assert!(v.is_finite());
                assert!((v - GFamily::limit(i, z)).abs() <= 1e-9 * LN_2 + 1e-15);
            }
        }
    }

    #[test]
    fn derivative_tails() {
        let f = GFamily::new(0.1).unwrap();
        assert!((f.derivative(1, -50.0) - 1.0).abs() < 1e-12);
        assert!(f.derivative(1, 50.0) < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_h() {
        assert!(GFamily::new(0.0).is_err());
        assert!(GFamily::new(-1.0).is_err());
        assert!(GFamily::new(f64::NAN).is_err());
    }
}
