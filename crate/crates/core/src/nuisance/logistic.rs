//! Weighted logistic regression by damped Newton iterations.

use crate::data::ObservationTable;
use crate::error::{Error, Result};

/// Fitted logistic model on an intercept plus selected covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Intercept first, then one coefficient per column in `columns`.
    pub coef: Vec<f64>,
    pub columns: Vec<usize>,
}

/// A fit together with its convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: LogisticModel,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Some fitted index exceeded ±30 (quasi-separation).
    pub separation: bool,
}

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;

fn log1pexp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Solve `A x = b` for symmetric positive definite `A` (row-major, k×k).
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for r in 0..j {
                s -= l[i * k + r] * l[j * k + r];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for r in 0..i {
            s -= l[i * k + r] * z[r];
        }
        z[i] = s / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = z[i];
        for r in i + 1..k {
            s -= l[r * k + i] * x[r];
        }
        x[i] = s / l[i * k + i];
    }
    Some(x)
}

impl LogisticModel {
    pub fn index(&self, x: &[f64]) -> f64 {
        self.coef[0]
            + self
                .columns
                .iter()
                .zip(&self.coef[1..])
                .map(|(&c, b)| b * x[c])
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.index(x))
    }

    /// Fit `P(y=1|x)` with weights. `rows` are full covariate vectors.
    pub fn fit(rows: &[&[f64]], y: &[f64], w: &[f64], columns: &[usize]) -> Result<LogisticFit> {
        let n = rows.len();
        if n == 0 || y.len() != n || w.len() != n {
            return Err(Error::Invalid("logistic fit needs matching, nonempty inputs".into()));
        }
        let wsum: f64 = w.iter().sum();
        if !(wsum > 0.0) {
            return Err(Error::Invalid("logistic fit needs positive total weight".into()));
        }
        let k = columns.len() + 1;
        let feat = |i: usize, j: usize| if j == 0 { 1.0 } else { rows[i][columns[j - 1]] };
        let mut model = LogisticModel {
            coef: vec![0.0; k],
            columns: columns.to_vec(),
        };
        let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
        if ybar > 0.0 && ybar < 1.0 {
            model.coef[0] = (ybar / (1.0 - ybar)).ln();
        }
        let loglik = |m: &LogisticModel| {
            (0..n)
                .map(|i| {
                    let t = m.index(rows[i]);
                    w[i] * (y[i] * t - log1pexp(t))
                })
                .sum::<f64>()
                / wsum
        };
        let mut ll = loglik(&model);
        let mut iterations = 0;
        let mut grad_norm = f64::INFINITY;
        while iterations < MAX_ITER {
            let mut g = vec![0.0; k];
            let mut h = vec![0.0; k * k];
            for i in 0..n {
                let p = model.predict(rows[i]);
                let r = w[i] * (y[i] - p);
                let v = w[i] * p * (1.0 - p);
                for a in 0..k {
                    let fa = feat(i, a);
                    g[a] += r * fa;
                    for b in 0..=a {
                        h[a * k + b] += v * fa * feat(i, b);
                    }
                }
            }
            for a in 0..k {
                g[a] /= wsum;
                for b in 0..=a {
                    h[a * k + b] /= wsum;
                    h[b * k + a] = h[a * k + b];
                }
                h[a * k + a] += 1e-12;
            }
            grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if grad_norm <= GRAD_TOL {
                break;
            }
            iterations += 1;
            let Some(step) = cholesky_solve(&h, &g, k) else {
                break;
            };
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let trial = LogisticModel {
                    coef: model.coef.iter().zip(&step).map(|(b, s)| b + t * s).collect(),
                    columns: model.columns.clone(),
                };
                let ll_new = loglik(&trial);
                if ll_new >= ll - 1e-15 {
                    model = trial;
                    ll = ll_new;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let separation = rows.iter().any(|r| model.index(r).abs() > 30.0);
        if separation {
            log::warn!("logistic fit: fitted index beyond ±30, data are quasi-separated");
        }
        Ok(LogisticFit {
            model,
            iterations,
            grad_norm,
            separation,
        })
    }
}

/// Fit `s(d,·) = P(S=1 | D=d, X)` on the arm-`d` rows of `table`.
pub fn fit_selection(table: &ObservationTable, d: u8, columns: &[usize]) -> Result<LogisticFit> {
    let idx: Vec<usize> = (0..table.n()).filter(|&i| table.d(i) == d).collect();
    if idx.is_empty() {
        return Err(Error::Invalid(format!("no rows with D={d} to fit selection")));
    }
    let rows: Vec<&[f64]> = idx.iter().map(|&i| table.x(i)).collect();
    let y: Vec<f64> = idx.iter().map(|&i| f64::from(table.s(i))).collect();
    let w: Vec<f64> = idx.iter().map(|&i| table.weight(i)).collect();
    LogisticModel::fit(&rows, &y, &w, columns)
}

/// Fit `m(·) = P(D=1 | X)` on all rows.
pub fn fit_propensity(table: &ObservationTable, columns: &[usize]) -> Result<LogisticFit> {
    let rows: Vec<&[f64]> = (0..table.n()).map(|i| table.x(i)).collect();
    let y: Vec<f64> = (0..table.n()).map(|i| f64::from(table.d(i))).collect();
    LogisticModel::fit(&rows, &y, table.weights(), columns)
}
