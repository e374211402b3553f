//! Cell learners for the conditional outcome law given `S=1, D=d, X`.
//!
//! Covariate space is cut into cells by discrete columns and quantile bins of
//! continuous ones. Each (cell, arm) keeps one sorted weighted sample, so the
//! quantile and trimmed-mean surfaces are monotone in `u` by construction.

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::law::{DiscreteLaw, OutcomeLaw};
use std::collections::BTreeMap;
use std::sync::Arc;

/// How one covariate column enters the cell key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellRule {
    /// Every distinct value is its own level.
    Discrete,
    /// `k` bins cut at weighted training quantiles.
    Bins(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellColumn {
    pub column: usize,
    pub rule: CellRule,
}

/// Cell definition. An empty column list means one pooled cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellSpec {
    pub columns: Vec<CellColumn>,
    /// Fall back to the pooled arm law when a cell has no selected outcomes.
    pub lenient: bool,
}

impl CellSpec {
    pub fn pooled() -> Self {
        CellSpec::default()
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        for c in &self.columns {
            if c.column >= p {
                return Err(Error::Invalid(format!(
                    "cell column {} out of range for {p} covariates",
                    c.column
                )));
            }
            if c.rule == CellRule::Bins(0) {
                return Err(Error::Invalid("a binned cell column needs at least one bin".into()));
            }
        }
        Ok(())
    }
}

type CellKey = Vec<u64>;

/// Fitted cell model.
#[derive(Debug, Clone)]
pub struct CellModel {
    spec: CellSpec,
    /// Interior cut points for binned columns (empty for discrete ones).
    edges: Vec<Vec<f64>>,
    laws: BTreeMap<CellKey, [Option<Arc<OutcomeLaw>>; 2]>,
    pooled: [Option<Arc<OutcomeLaw>>; 2],
}

fn weighted_cuts(mut vals: Vec<(f64, f64)>, k: usize) -> Vec<f64> {
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = vals.iter().map(|v| v.1).sum();
    let mut cuts = Vec::with_capacity(k.saturating_sub(1));
    let mut acc = 0.0;
    let mut it = vals.iter();
    let mut cur = f64::NAN;
    for j in 1..k {
        let target = total * j as f64 / k as f64;
        while acc < target {
            match it.next() {
                Some(&(y, w)) => {
                    acc += w;
                    cur = y;
                }
                None => break,
            }
        }
        if cur.is_finite() && cuts.last() != Some(&cur) {
            cuts.push(cur);
        }
    }
    cuts
}

impl CellModel {
    /// Fit on the selected rows of `table`.
    pub fn fit(table: &ObservationTable, spec: &CellSpec) -> Result<Self> {
        spec.validate(table.p())?;
        let edges: Vec<Vec<f64>> = spec
            .columns
            .iter()
            .map(|c| match c.rule {
                CellRule::Discrete => Vec::new(),
                CellRule::Bins(k) => weighted_cuts(
                    (0..table.n())
                        .map(|i| (table.x(i)[c.column], table.weight(i)))
                        .collect(),
                    k,
                ),
            })
            .collect();
        let mut model = CellModel {
            spec: spec.clone(),
            edges,
            laws: BTreeMap::new(),
            pooled: [None, None],
        };
        let mut groups: BTreeMap<CellKey, [Vec<(f64, f64)>; 2]> = BTreeMap::new();
        let mut pooled: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
        for i in 0..table.n() {
            if table.s(i) != 1 || table.weight(i) <= 0.0 {
                continue;
            }
            let d = usize::from(table.d(i));
            let pt = (table.y(i), table.weight(i));
            groups.entry(model.key(table.x(i))).or_default()[d].push(pt);
            pooled[d].push(pt);
        }
        let build = |pts: &[(f64, f64)]| -> Result<Option<Arc<OutcomeLaw>>> {
            if pts.is_empty() {
                Ok(None)
            } else {
                Ok(Some(Arc::new(OutcomeLaw::Discrete(DiscreteLaw::new(pts)?))))
            }
        };
        for (key, [g0, g1]) in groups {
            model.laws.insert(key, [build(&g0)?, build(&g1)?]);
        }
        model.pooled = [build(&pooled[0])?, build(&pooled[1])?];
        Ok(model)
    }

    fn key(&self, x: &[f64]) -> CellKey {
        self.spec
            .columns
            .iter()
            .zip(&self.edges)
            .map(|(c, e)| {
                let v = x[c.column];
                match c.rule {
                    CellRule::Discrete => v.to_bits(),
                    CellRule::Bins(_) => e.partition_point(|t| *t < v) as u64,
                }
            })
            .collect()
    }

    fn describe(&self, x: &[f64]) -> String {
        if self.spec.columns.is_empty() {
            return "pooled".into();
        }
        self.spec
            .columns
            .iter()
            .zip(self.key(x))
            .map(|(c, k)| match c.rule {
                CellRule::Discrete => format!("x{}={}", c.column, x[c.column]),
                CellRule::Bins(_) => format!("x{}:bin{k}", c.column),
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Outcome law for arm `d` at covariate `x`.
    pub fn law(&self, x: &[f64], d: u8) -> Result<Arc<OutcomeLaw>> {
        let k = usize::from(d);
        if let Some(Some(l)) = self.laws.get(&self.key(x)).map(|c| c[k].clone()) {
            return Ok(l);
        }
        let cell = self.describe(x);
        match (&self.pooled[k], self.spec.lenient) {
            (Some(l), true) => {
                log::warn!("cell {cell} has no selected outcomes for arm {d}; using the pooled arm law");
                Ok(l.clone())
            }
            _ => Err(Error::EmptyCell { cell, arm: d }),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.laws.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(y: &[f64], s: &[u8], d: &[u8], x: &[f64]) -> ObservationTable {
        ObservationTable::new(
            y.to_vec(),
            s.to_vec(),
            d.to_vec(),
            x.iter().map(|v| vec![*v]).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_cell_quantiles_and_trims() {
        let t = table(&[1.0, 2.0, 3.0, 4.0], &[1; 4], &[1; 4], &[0.0; 4]);
        let m = CellModel::fit(&t, &CellSpec::pooled()).unwrap();
        let l = m.law(&[0.0], 1).unwrap();
        assert_eq!(l.quantile(0.5), 2.0);
        assert_eq!(l.quantile(1.0), 4.0);
        assert!((l.trunc_mean(1, 0.5) - 1.5).abs() < 1e-15);
        assert!((l.trunc_mean(1, 1.0) - 2.5).abs() < 1e-15);
        assert!((l.trunc_mean(0, 0.0) - 2.5).abs() < 1e-15);
        assert!(matches!(m.law(&[0.0], 0), Err(Error::EmptyCell { arm: 0, .. })));
    }

    #[test]
    fn discrete_cells_separate_and_lenient_falls_back() {
        let t = table(
            &[1.0, 5.0, 10.0, 0.0],
            &[1, 1, 1, 1],
            &[1, 1, 0, 0],
            &[0.0, 1.0, 0.0, 1.0],
        );
        let spec = CellSpec {
            columns: vec![CellColumn {
                column: 0,
                rule: CellRule::Discrete,
            }],
            lenient: false,
        };
        let m = CellModel::fit(&t, &spec).unwrap();
        assert_eq!(m.n_cells(), 2);
        assert_eq!(m.law(&[1.0], 1).unwrap().mean(), 5.0);
        assert_eq!(m.law(&[0.0], 0).unwrap().mean(), 10.0);
        let err = m.law(&[2.0], 1).unwrap_err();
        assert!(err.to_string().contains("x0=2"));
        let m = CellModel::fit(&t, &CellSpec { lenient: true, ..spec }).unwrap();
        assert_eq!(m.law(&[2.0], 1).unwrap().mean(), 3.0);
    }

    #[test]
    fn bins_cut_at_weighted_quantiles() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 10.0 * v).collect();
        let t = table(&y, &[1; 8], &[1; 8], &x);
        let spec = CellSpec {
            columns: vec![CellColumn {
                column: 0,
                rule: CellRule::Bins(2),
            }],
            lenient: false,
        };
        let m = CellModel::fit(&t, &spec).unwrap();
        assert_eq!(m.n_cells(), 2);
        assert_eq!(m.law(&[2.0], 1).unwrap().mean(), 15.0);
        assert_eq!(m.law(&[6.5], 1).unwrap().mean(), 55.0);
    }
}
