//! K-fold cross-fitting of the built-in learners.

use super::cells::{CellModel, CellSpec};
use super::logistic::{fit_propensity, fit_selection, LogisticModel};
use super::{Floors, NuisanceBundle, Provenance};
use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::law::OutcomeLaw;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// Treatment propensity learner.
#[derive(Debug, Clone, PartialEq)]
pub enum PropensityLearner {
    /// Logistic regression on the given columns (`None` = all).
    Logistic(Option<Vec<usize>>),
    /// A known design probability, e.g. a randomized experiment.
    Constant(f64),
}

/// Built-in learner configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub propensity: PropensityLearner,
    /// Covariates entering the selection logits (`None` = all).
    pub selection_columns: Option<Vec<usize>>,
    pub cells: CellSpec,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec {
            propensity: PropensityLearner::Logistic(None),
            selection_columns: None,
            cells: CellSpec::pooled(),
        }
    }
}

/// Which model evaluated each row, and which rows trained each model.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub k: usize,
    pub seed: u64,
    pub fold_of: Vec<usize>,
    pub train_rows: Vec<Vec<usize>>,
}

impl FoldRecord {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for f in &self.fold_of {
            sizes[*f] += 1;
        }
        sizes
    }

    /// True when no row was evaluated by a model trained on it.
    pub fn is_hygienic(&self) -> bool {
        self.fold_of
            .iter()
            .enumerate()
            .all(|(i, f)| self.train_rows[*f].binary_search(&i).is_err())
    }
}

/// Fold id per row: a seeded permutation dealt round-robin, so sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, row) in perm.into_iter().enumerate() {
        fold_of[row] = pos % k.max(1);
    }
    fold_of
}

struct FoldFit {
    m: PropensityFit,
    s: [LogisticModel; 2],
    cells: CellModel,
}

enum PropensityFit {
    Constant(f64),
    Model(LogisticModel),
}

fn all_columns(p: usize, cols: &Option<Vec<usize>>) -> Vec<usize> {
    cols.clone().unwrap_or_else(|| (0..p).collect())
}

fn fit_fold(train: &ObservationTable, spec: &LearnerSpec) -> Result<FoldFit> {
    let p = train.p();
    let m = match &spec.propensity {
        PropensityLearner::Constant(v) => PropensityFit::Constant(*v),
        PropensityLearner::Logistic(cols) => {
            PropensityFit::Model(fit_propensity(train, &all_columns(p, cols))?.model)
        }
    };
    let sel = all_columns(p, &spec.selection_columns);
    let s = [
        fit_selection(train, 0, &sel)?.model,
        fit_selection(train, 1, &sel)?.model,
    ];
    let cells = CellModel::fit(train, &spec.cells)?;
    Ok(FoldFit { m, s, cells })
}

/// Cross-fit the built-in learners with `k` folds.
pub fn crossfit(
    table: &ObservationTable,
    spec: &LearnerSpec,
    k: usize,
    seed: u64,
    floors: Floors,
) -> Result<NuisanceBundle> {
    let n = table.n();
    if k < 2 || k > n {
        return Err(Error::Invalid(format!("fold count must lie in [2, n={n}], got {k}")));
    }
    if let PropensityLearner::Constant(v) = spec.propensity {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Invalid(format!("constant propensity must lie in (0,1), got {v}")));
        }
    }
    for c in [&spec.selection_columns, match &spec.propensity {
        PropensityLearner::Logistic(c) => c,
        PropensityLearner::Constant(_) => &None,
    }]
    .into_iter()
    .flatten()
    {
        if let Some(bad) = c.iter().find(|j| **j >= table.p()) {
            return Err(Error::Invalid(format!("covariate column {bad} out of range")));
        }
    }
    let fold_of = fold_assignment(n, k, seed);
    let train_rows: Vec<Vec<usize>> = (0..k)
        .map(|f| (0..n).filter(|&i| fold_of[i] != f).collect())
        .collect();
    let fits: Vec<Result<FoldFit>> = train_rows
        .par_iter()
        .enumerate()
        .map(|(f, rows)| {
            fit_fold(&table.subset(rows), spec).map_err(|e| Error::Fold {
                fold: f,
                source: Box::new(e),
            })
        })
        .collect();
    let fits: Vec<FoldFit> = fits.into_iter().collect::<Result<_>>()?;

    let mut m = vec![0.0; n];
    let mut s0 = vec![0.0; n];
    let mut s1 = vec![0.0; n];
    let mut laws: Vec<[Arc<OutcomeLaw>; 2]> = Vec::with_capacity(n);
    for i in 0..n {
        let f = fold_of[i];
        let fit = &fits[f];
        let x = table.x(i);
        m[i] = match &fit.m {
            PropensityFit::Constant(v) => *v,
            PropensityFit::Model(model) => model.predict(x),
        };
        s0[i] = fit.s[0].predict(x);
        s1[i] = fit.s[1].predict(x);
        let fold_err = |e| Error::Fold {
            fold: f,
            source: Box::new(e),
        };
        laws.push([
            fit.cells.law(x, 0).map_err(fold_err)?,
            fit.cells.law(x, 1).map_err(fold_err)?,
        ]);
    }
    let record = FoldRecord {
        k,
        seed,
        fold_of,
        train_rows,
    };
    Ok(NuisanceBundle::assemble(m, s0, s1, laws, Provenance::CrossFitted, floors)?.with_folds(record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Arm;

    fn toy(n: usize) -> ObservationTable {
        let mut y = Vec::new();
        let mut s = Vec::new();
        let mut d = Vec::new();
        let mut x = Vec::new();
        for i in 0..n {
            let xi = (i % 7) as f64 / 3.0 - 1.0;
            d.push((i % 2) as u8);
            s.push(u8::from((i * 7 + 3) % 5 != 0));
            y.push(xi + (i % 3) as f64);
            x.push(vec![xi]);
        }
        ObservationTable::new(y, s, d, x, None).unwrap()
    }

    #[test]
    fn balanced_folds() {
        let f = fold_assignment(9, 5, 42);
        let mut sizes = vec![0; 5];
        for v in &f {
            sizes[*v] += 1;
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![2, 2, 2, 2, 1]);
    }

    #[test]
    fn deterministic_and_hygienic() {
        let t = toy(120);
        let spec = LearnerSpec::default();
        let a = crossfit(&t, &spec, 5, 7, Floors::default()).unwrap();
        let b = crossfit(&t, &spec, 5, 7, Floors::default()).unwrap();
        assert!(a.folds().unwrap().is_hygienic());
        for i in 0..t.n() {
            assert_eq!(a.m(i).to_bits(), b.m(i).to_bits());
            assert_eq!(a.s1(i).to_bits(), b.s1(i).to_bits());
            assert_eq!(a.law(i, Arm::Treated), b.law(i, Arm::Treated));
        }
        let c = crossfit(&t, &spec, 5, 8, Floors::default()).unwrap();
        assert_ne!(a.folds().unwrap().fold_of, c.folds().unwrap().fold_of);
    }

    #[test]
    fn rejects_bad_fold_counts() {
        let t = toy(10);
        assert!(crossfit(&t, &LearnerSpec::default(), 1, 0, Floors::default()).is_err());
        assert!(crossfit(&t, &LearnerSpec::default(), 11, 0, Floors::default()).is_err());
    }
}
