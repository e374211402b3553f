//! Conditional outcome laws `Y | S=1, D=d, X=x` and their trimmed moments.
//!
//! Trimmed means use the quantile-integral form: the lower tail of mass `a`
//! has mean `(1/a)∫₀ᵃ q(t) dt` and the upper tail `(1/a)∫_{1−a}¹ q(t) dt`.
//! For continuous laws this is `E[Y | Y ≤ q(a)]`; for laws with atoms it
//! splits the boundary atom fractionally, which keeps the trimmed means
//! continuous in `a`.

use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre8, integrate_split, norm_pdf, norm_quantile, KahanSum};

/// Which end of the distribution a trimmed mean keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tail {
    /// Keep `Y ≤ q(a)`.
    Lower,
    /// Keep `Y ≥ q(1−a)`.
    Upper,
}

/// A uniform piece of a piecewise-constant density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

/// Finitely supported law with cumulative tables for O(log n) tail queries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    atoms: Vec<f64>,
    /// Cumulative probability through atom k.
    cum_p: Vec<f64>,
    /// Cumulative Σ p·y through atom k.
    cum_py: Vec<f64>,
}

impl DiscreteLaw {
    /// Build from (value, weight) pairs; weights need not be normalised.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|(_, w)| *w > 0.0)
            .collect();
        if pts.is_empty() {
            return Err(Error::Invalid("discrete law needs a positive-weight atom".into()));
        }
        if pts.iter().any(|(y, w)| !y.is_finite() || !w.is_finite()) {
            return Err(Error::Invalid("discrete law atoms must be finite".into()));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pts.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pts.len());
        for (y, w) in pts {
            if atoms.last() == Some(&y) {
                *probs.last_mut().expect("nonempty") += w;
            } else {
                atoms.push(y);
                probs.push(w);
            }
        }
        let total: f64 = probs.iter().sum();
        let mut cum_p = Vec::with_capacity(atoms.len());
        let mut cum_py = Vec::with_capacity(atoms.len());
        let (mut cp, mut cpy) = (KahanSum::default(), KahanSum::default());
        for (y, w) in atoms.iter().zip(&probs) {
            cp.add(w / total);
            cpy.add(w / total * y);
            cum_p.push(cp.value());
            cum_py.push(cpy.value());
        }
        *cum_p.last_mut().expect("nonempty") = 1.0;
        Ok(DiscreteLaw {
            atoms,
            cum_p,
            cum_py,
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.cum_p[k] - if k == 0 { 0.0 } else { self.cum_p[k - 1] }
    }

    /// Index of the left-continuous `u`-quantile atom.
    fn quantile_index(&self, u: f64) -> usize {
        let k = self.cum_p.partition_point(|c| *c < u - 1e-15);
        k.min(self.atoms.len() - 1)
    }

    /// ∫₀ᵘ q(t) dt.
    fn lower_integral(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let k = self.quantile_index(u);
        let (below_p, below_py) = if k == 0 {
            (0.0, 0.0)
        } else {
            (self.cum_p[k - 1], self.cum_py[k - 1])
        };
        below_py + (u - below_p).max(0.0) * self.atoms[k]
    }
}

/// A conditional outcome law.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeLaw {
    /// Degenerate at a value.
    Point(f64),
    /// Normal with the given mean and standard deviation.
    Normal { mean: f64, sd: f64 },
    /// Piecewise-constant density on disjoint, ordered segments.
    Piecewise(Vec<Segment>),
    /// Finitely supported law.
    Discrete(DiscreteLaw),
    /// Quantiles and trimmed means tabulated on a grid of `u`; linear in between.
    Grid(GridLaw),
}

/// Tabulated quantile and trimmed-mean curves indexed by `u`.
///
/// `lower[k]` is the mean of the lower tail of mass `u[k]`; `upper[k]` is the
/// mean of `Y ≥ q(u[k])`, i.e. the upper tail of mass `1 − u[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLaw {
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.len() == 1 || x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|v| *v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

impl GridLaw {
    pub fn new(u: Vec<f64>, q: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = u.len();
        if n == 0 || q.len() != n || lower.len() != n || upper.len() != n {
            return Err(Error::Invalid("grid law needs equal-length, nonempty columns".into()));
        }
        if u.windows(2).any(|w| w[0] >= w[1]) || u[0] < 0.0 || u[n - 1] > 1.0 {
            return Err(Error::Invalid("grid u values must increase within [0,1]".into()));
        }
        if q.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("tabulated quantiles must be nondecreasing in u".into()));
        }
        Ok(GridLaw { u, q, lower, upper })
    }
}

impl OutcomeLaw {
    /// Mixture of uniform components `(lo, hi, weight)`; overlapping pieces are merged
    /// into a piecewise-constant density.
    pub fn uniform_mixture(parts: &[(f64, f64, f64)]) -> Result<Self> {
        let parts: Vec<_> = parts.iter().copied().filter(|p| p.2 > 0.0).collect();
        if parts.is_empty() {
            return Err(Error::Invalid("uniform mixture needs a positive weight".into()));
        }
        if parts.iter().any(|(lo, hi, _)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::Invalid("uniform components need finite lo < hi".into()));
        }
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let mut cuts: Vec<f64> = parts.iter().flat_map(|p| [p.0, p.1]).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut segs = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let dens: f64 = parts
                .iter()
                .filter(|p| p.0 <= a && b <= p.1)
                .map(|p| p.2 / total / (p.1 - p.0))
                .sum();
            if dens > 0.0 {
                segs.push(Segment {
                    lo: a,
                    hi: b,
                    mass: dens * (b - a),
                });
            }
        }
        Ok(OutcomeLaw::Piecewise(segs))
    }

    /// Left-continuous quantile `inf{y : F(y) ≥ u}`; `u=0` gives the support minimum.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            OutcomeLaw::Point(c) => *c,
            OutcomeLaw::Normal { mean, sd } => mean + sd * norm_quantile(u),
            OutcomeLaw::Piecewise(segs) => {
                let mut acc = 0.0;
                for s in segs {
                    if u <= acc + s.mass {
                        let f = ((u - acc) / s.mass).clamp(0.0, 1.0);
                        return s.lo + f * (s.hi - s.lo);
                    }
                    acc += s.mass;
                }
                segs.last().map(|s| s.hi).unwrap_or(f64::NAN)
            }
            OutcomeLaw::Discrete(d) => d.atoms[d.quantile_index(u)],
            OutcomeLaw::Grid(g) => interp(&g.u, &g.q, u),
        }
    }

    /// ∫₀ᵘ q(t) dt (not defined for tabulated laws).
    fn lower_integral(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            OutcomeLaw::Point(c) => c * u,
            OutcomeLaw::Normal { mean, sd } => {
                if u <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    *mean
                } else {
                    mean * u - sd * norm_pdf(norm_quantile(u))
                }
            }
            OutcomeLaw::Piecewise(segs) => {
                let mut acc = 0.0;
                let mut out = KahanSum::default();
                for s in segs {
                    if u <= acc {
                        break;
                    }
                    let f = ((u - acc) / s.mass).min(1.0);
                    out.add(s.mass * f * (s.lo + 0.5 * f * (s.hi - s.lo)));
                    acc += s.mass;
                }
                out.value()
            }
            OutcomeLaw::Discrete(d) => d.lower_integral(u),
            OutcomeLaw::Grid(g) => u * interp(&g.u, &g.lower, u),
        }
    }

    /// Full mean.
    pub fn mean(&self) -> f64 {
        match self {
            OutcomeLaw::Grid(g) => interp(&g.u, &g.lower, 1.0),
            _ => self.lower_integral(1.0),
        }
    }

    /// Mean of the tail of probability mass `mass ∈ (0, 1]`; at `mass = 0` the
    /// limit (support end) is returned.
    pub fn tail_mean(&self, tail: Tail, mass: f64) -> f64 {
        let a = mass.clamp(0.0, 1.0);
        if let OutcomeLaw::Grid(g) = self {
            return match tail {
                Tail::Lower => interp(&g.u, &g.lower, a),
                Tail::Upper => interp(&g.u, &g.upper, 1.0 - a),
            };
        }
        if a <= 0.0 {
            return match tail {
                Tail::Lower => self.quantile(0.0),
                Tail::Upper => self.quantile(1.0),
            };
        }
        if let OutcomeLaw::Point(c) = self {
            return *c;
        }
        match tail {
            Tail::Lower => self.lower_integral(a) / a,
            Tail::Upper => {
                if let OutcomeLaw::Normal { mean, sd } = self {
                    return if a >= 1.0 {
                        *mean
                    } else {
                        mean + sd * norm_pdf(norm_quantile(1.0 - a)) / a
                    };
                }
                (self.mean() - self.lower_integral(1.0 - a)) / a
            }
        }
    }

    /// `β_{j,d}(u)`: `j=1` keeps `Y ≤ q(u)`, `j=0` keeps `Y ≥ q(u)`.
    pub fn trunc_mean(&self, j: u8, u: f64) -> f64 {
        if j == 1 {
            self.tail_mean(Tail::Lower, u)
        } else {
            self.tail_mean(Tail::Upper, 1.0 - u)
        }
    }

    /// CDF `P(Y ≤ y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            OutcomeLaw::Point(c) => f64::from(y >= *c),
            OutcomeLaw::Normal { mean, sd } => crate::numeric::norm_cdf((y - mean) / sd),
            OutcomeLaw::Piecewise(segs) => segs
                .iter()
                .map(|s| s.mass * ((y - s.lo) / (s.hi - s.lo)).clamp(0.0, 1.0))
                .sum(),
            OutcomeLaw::Discrete(d) => {
                let k = d.atoms.partition_point(|a| *a <= y);
                if k == 0 {
                    0.0
                } else {
                    d.cum_p[k - 1]
                }
            }
            OutcomeLaw::Grid(g) => {
                if y < g.q[0] {
                    return 0.0;
                }
                let k = g.q.partition_point(|v| *v <= y);
                if k >= g.q.len() {
                    return 1.0;
                }
                interp(&g.q[..], &g.u[..], y)
            }
        }
    }

    /// Probability of the atom at `y` (zero for continuous laws).
    pub fn atom(&self, y: f64) -> f64 {
        match self {
            OutcomeLaw::Point(c) => f64::from(y == *c),
            OutcomeLaw::Discrete(d) => match d.atoms.binary_search_by(|a| a.total_cmp(&y)) {
                Ok(k) => d.prob(k),
                Err(_) => 0.0,
            },
            _ => 0.0,
        }
    }

    /// `E[f(Y)]` for a function smooth between the given breakpoints. Tabulated
    /// laws cannot be integrated and return `None`.
    pub fn expect(&self, f: &dyn Fn(f64) -> f64, breaks: &[f64]) -> Option<f64> {
        match self {
            OutcomeLaw::Point(c) => Some(f(*c)),
            OutcomeLaw::Normal { mean, sd } => {
                let z_breaks: Vec<f64> = breaks.iter().map(|b| (b - mean) / sd).collect();
                Some(integrate_split(
                    |z| f(mean + sd * z) * norm_pdf(z),
                    -12.0,
                    12.0,
                    &z_breaks,
                    1e-13,
                ))
            }
            OutcomeLaw::Piecewise(segs) => {
                let mut out = KahanSum::default();
                for s in segs {
                    let mut cuts: Vec<f64> = breaks
                        .iter()
                        .copied()
                        .filter(|b| *b > s.lo && *b < s.hi)
                        .collect();
                    cuts.sort_by(f64::total_cmp);
                    let dens = s.mass / (s.hi - s.lo);
                    let mut left = s.lo;
                    for c in cuts.into_iter().chain(std::iter::once(s.hi)) {
                        out.add(dens * gauss_legendre8(f, left, c));
                        left = c;
                    }
                }
                Some(out.value())
            }
            OutcomeLaw::Discrete(d) => {
                let mut out = KahanSum::default();
                for (k, y) in d.atoms.iter().enumerate() {
                    out.add(d.prob(k) * f(*y));
                }
                Some(out.value())
            }
            OutcomeLaw::Grid(_) => None,
        }
    }

    /// True when `Y` has no atoms (trimming indicators are then a.s. unambiguous).
    pub fn is_continuous(&self) -> bool {
        matches!(self, OutcomeLaw::Normal { .. } | OutcomeLaw::Piecewise(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn discrete_quantile_and_tail_means() {
        let law = OutcomeLaw::Discrete(
            DiscreteLaw::new(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0)]).unwrap(),
        );
        approx(law.quantile(0.5), 2.0, 0.0);
        approx(law.quantile(1.0), 4.0, 0.0);
        approx(law.quantile(0.0), 1.0, 0.0);
        approx(law.trunc_mean(1, 0.5), 1.5, 1e-15);
        approx(law.trunc_mean(1, 1.0), 2.5, 1e-15);
        approx(law.trunc_mean(0, 0.0), 2.5, 1e-15);
        approx(law.trunc_mean(0, 0.5), 3.5, 1e-15);
        // Fractional boundary atom: lower 0.3 = 0.25·1 + 0.05·2 over 0.3.
        approx(law.tail_mean(Tail::Lower, 0.3), (0.25 + 0.1) / 0.3, 1e-14);
    }

    #[test]
    fn mixture_matches_closed_form() {
        let p0 = 0.6;
        let law = OutcomeLaw::uniform_mixture(&[(0.0, 1.0, p0), (1.0, 2.0, 1.0 - p0)]).unwrap();
        approx(law.quantile(0.3), 0.3 / p0, 1e-14);
        approx(law.tail_mean(Tail::Lower, p0), 0.5, 1e-14);
        approx(law.mean(), p0 * 0.5 + (1.0 - p0) * 1.5, 1e-14);
        approx(law.tail_mean(Tail::Upper, 1.0 - p0), 1.5, 1e-14);
        approx(law.cdf(0.5), 0.3, 1e-15);
        let m2 = law.expect(&|y| y * y, &[]).unwrap();
        approx(m2, p0 / 3.0 + (1.0 - p0) * 7.0 / 3.0, 1e-14);
    }

    #[test]
    fn overlapping_mixture_merges() {
        let law = OutcomeLaw::uniform_mixture(&[(0.0, 1.0, 0.5), (0.5, 1.5, 0.5)]).unwrap();
        approx(law.cdf(0.5), 0.25, 1e-15);
        approx(law.cdf(1.0), 0.75, 1e-15);
        approx(law.quantile(0.5), 0.75, 1e-14);
    }

    #[test]
    fn normal_trimmed_means() {
        let law = OutcomeLaw::Normal { mean: 1.0, sd: 2.0 };
        let a = 0.3;
        let q = law.quantile(a);
        let direct = law.expect(&|y| if y <= q { y } else { 0.0 }, &[q]).unwrap() / a;
        approx(law.tail_mean(Tail::Lower, a), direct, 1e-10);
        let q = law.quantile(1.0 - a);
        let direct = law.expect(&|y| if y >= q { y } else { 0.0 }, &[q]).unwrap() / a;
        approx(law.tail_mean(Tail::Upper, a), direct, 1e-10);
    }

    #[test]
    fn grid_law_interpolates() {
        let g = GridLaw::new(
            vec![0.0, 0.5, 1.0],
            vec![0.0, 1.0, 2.0],
            vec![0.0, 0.5, 1.0],
            vec![1.0, 1.5, 2.0],
        )
        .unwrap();
        let law = OutcomeLaw::Grid(g);
        approx(law.quantile(0.25), 0.5, 1e-15);
        approx(law.trunc_mean(1, 0.75), 0.75, 1e-15);
        approx(law.trunc_mean(0, 0.25), 1.25, 1e-15);
        assert!(law.expect(&|y| y, &[]).is_none());
    }
}
