//! Nuisance functions evaluated at each row: treatment propensity, selection
//! probabilities and per-arm outcome laws (quantiles and trimmed means).

mod cells;
mod crossfit;
mod logistic;

pub use cells::{CellColumn, CellModel, CellRule, CellSpec};
pub use crossfit::{crossfit, fold_assignment, FoldRecord, LearnerSpec, PropensityLearner};
pub use logistic::{fit_propensity, fit_selection, LogisticFit, LogisticModel};

use crate::data::{classify_partition, Arm, ObservationTable, PartitionLabel};
use crate::error::{Error, Result};
use crate::identification::{CovariateMeasure, RowNuisance, SupportBounds};
use crate::law::OutcomeLaw;
use crate::numeric::KahanSum;
use serde::Serialize;
use std::sync::Arc;

/// Where a bundle's values came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    CrossFitted,
    Oracle,
    External,
}

/// Overlap floors: `m ∈ [m̲, 1−m̲]`, `s0, s1 ∈ [s̲, 1−s̲]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Floors {
    pub m: f64,
    pub s: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Floors { m: 0.01, s: 0.01 }
    }
}

impl Floors {
    pub fn new(m: f64, s: f64) -> Result<Self> {
        for (name, v) in [("propensity", m), ("selection", s)] {
            if !(v > 0.0 && v < 0.5) {
                return Err(Error::Invalid(format!("{name} floor must lie in (0, 1/2), got {v}")));
            }
        }
        Ok(Floors { m, s })
    }
}

/// Per-row nuisance evaluations.
#[derive(Debug, Clone)]
pub struct NuisanceBundle {
    m: Vec<f64>,
    s0: Vec<f64>,
    s1: Vec<f64>,
    laws: Vec<[Arc<OutcomeLaw>; 2]>,
    support: Option<SupportBounds>,
    provenance: Provenance,
    floors: Floors,
    n_clamped: usize,
    folds: Option<FoldRecord>,
}

fn clamp_count(v: &mut [f64], lo: f64, hi: f64, hits: &mut [bool]) {
    for (x, hit) in v.iter_mut().zip(hits.iter_mut()) {
        let c = x.clamp(lo, hi);
        if c != *x {
            *hit = true;
            *x = c;
        }
    }
}

impl NuisanceBundle {
    /// Assemble a bundle, clamping probabilities into the overlap floors.
    pub fn assemble(
        mut m: Vec<f64>,
        mut s0: Vec<f64>,
        mut s1: Vec<f64>,
        laws: Vec<[Arc<OutcomeLaw>; 2]>,
        provenance: Provenance,
        floors: Floors,
    ) -> Result<Self> {
        let n = m.len();
        if s0.len() != n || s1.len() != n || laws.len() != n {
            return Err(Error::Invalid("nuisance columns have different lengths".into()));
        }
        if let Some(i) = (0..n).find(|&i| !(m[i].is_finite() && s0[i].is_finite() && s1[i].is_finite())) {
            return Err(Error::Invalid(format!("non-finite nuisance value at row {i}")));
        }
        let mut hits = vec![false; n];
        clamp_count(&mut m, floors.m, 1.0 - floors.m, &mut hits);
        clamp_count(&mut s0, floors.s, 1.0 - floors.s, &mut hits);
        clamp_count(&mut s1, floors.s, 1.0 - floors.s, &mut hits);
        let n_clamped = hits.iter().filter(|h| **h).count();
        if n_clamped > 0 {
            log::warn!("clamped nuisances at the overlap floors on {n_clamped} of {n} rows");
        }
        Ok(NuisanceBundle {
            m,
            s0,
            s1,
            laws,
            support: None,
            provenance,
            floors,
            n_clamped,
            folds: None,
        })
    }

    pub fn with_support(mut self, support: SupportBounds) -> Self {
        self.support = Some(support);
        self
    }

    pub(crate) fn with_folds(mut self, folds: FoldRecord) -> Self {
        self.folds = Some(folds);
        self
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self, i: usize) -> f64 {
        self.m[i]
    }

    pub fn s0(&self, i: usize) -> f64 {
        self.s0[i]
    }

    pub fn s1(&self, i: usize) -> f64 {
        self.s1[i]
    }

    pub fn p0(&self, i: usize) -> f64 {
        self.s0[i] / self.s1[i]
    }

    pub fn law(&self, i: usize, arm: Arm) -> &OutcomeLaw {
        &self.laws[i][arm.index()]
    }

    pub fn support(&self) -> Option<SupportBounds> {
        self.support
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn floors(&self) -> Floors {
        self.floors
    }

    pub fn n_clamped(&self) -> usize {
        self.n_clamped
    }

    pub fn folds(&self) -> Option<&FoldRecord> {
        self.folds.as_ref()
    }

    /// `q_d(u, x_i)`.
    pub fn quantile(&self, i: usize, d: u8, u: f64) -> f64 {
        self.laws[i][Arm::from_d(d).index()].quantile(u)
    }

    /// `β_{j,d}(x_i, u)`.
    pub fn trunc_mean(&self, i: usize, j: u8, d: u8, u: f64) -> f64 {
        self.laws[i][Arm::from_d(d).index()].trunc_mean(j, u)
    }

    pub fn row(&self, i: usize) -> RowNuisance<'_> {
        RowNuisance {
            m: self.m[i],
            s0: self.s0[i],
            s1: self.s1[i],
            laws: [&self.laws[i][0], &self.laws[i][1]],
            support: self.support,
        }
    }

    pub fn label(&self, i: usize, eps0: f64) -> Result<PartitionLabel> {
        classify_partition(self.s0[i], self.s1[i], eps0)
    }

    /// Rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> NuisanceBundle {
        NuisanceBundle {
            m: rows.iter().map(|&i| self.m[i]).collect(),
            s0: rows.iter().map(|&i| self.s0[i]).collect(),
            s1: rows.iter().map(|&i| self.s1[i]).collect(),
            laws: rows.iter().map(|&i| self.laws[i].clone()).collect(),
            support: self.support,
            provenance: self.provenance,
            floors: self.floors,
            n_clamped: self.n_clamped,
            folds: None,
        }
    }

    /// Replace the outcome laws, keeping probabilities.
    pub fn with_laws(mut self, laws: Vec<[Arc<OutcomeLaw>; 2]>) -> Result<Self> {
        if laws.len() != self.n() {
            return Err(Error::Invalid("outcome law count differs from row count".into()));
        }
        self.laws = laws;
        Ok(self)
    }
}

/// Empirical outcome support per arm from the selected rows.
pub fn empirical_support(table: &ObservationTable) -> Option<SupportBounds> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for i in 0..table.n() {
        if table.s(i) == 1 {
            let k = usize::from(table.d(i));
            lo[k] = lo[k].min(table.y(i));
            hi[k] = hi[k].max(table.y(i));
        }
    }
    if lo.iter().chain(&hi).all(|v| v.is_finite()) {
        Some(SupportBounds { lower: lo, upper: hi })
    } else {
        None
    }
}

/// The sample's empirical covariate distribution with a bundle's nuisances.
pub struct SampleMeasure<'a> {
    pub bundle: &'a NuisanceBundle,
    pub weights: &'a [f64],
}

impl CovariateMeasure for SampleMeasure<'_> {
    fn expect(&self, f: &dyn Fn(&RowNuisance<'_>) -> f64) -> f64 {
        let mut num = KahanSum::default();
        let mut den = KahanSum::default();
        for (i, w) in self.weights.iter().enumerate() {
            if *w > 0.0 {
                num.add(w * f(&self.bundle.row(i)));
            }
            den.add(*w);
        }
        num.value() / den.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamping_counts_rows_once() {
        let law = Arc::new(OutcomeLaw::Point(0.0));
        let laws = vec![[law.clone(), law.clone()]; 3];
        let b = NuisanceBundle::assemble(
            vec![0.5, 0.001, 0.5],
            vec![0.0001, 0.0001, 0.5],
            vec![0.5, 0.5, 0.5],
            laws,
            Provenance::External,
            Floors::default(),
        )
        .unwrap();
        assert_eq!(b.n_clamped(), 2);
        assert_eq!(b.m(1), 0.01);
        assert_eq!(b.s0(0), 0.01);
        for i in 0..3 {
            assert!(b.m(i) >= 0.01 && b.m(i) <= 0.99);
            assert!(b.s0(i) >= 0.01 && b.s1(i) <= 0.99);
        }
    }

    #[test]
    fn floors_are_validated() {
        assert!(Floors::new(0.0, 0.1).is_err());
        assert!(Floors::new(0.1, 0.5).is_err());
        assert!(Floors::new(1e-9, 1e-9).is_ok());
    }
}
