//! File formats: observation CSV, external nuisance CSV, and the experiment
//! output tables.
//!
//! Observation files have a header with `y,s,d` (and usually `weight`) plus
//! covariates `x1..xp`. A missing outcome is an empty field or `NA`.
//!
//! Nuisance files hold one row per observation, in the same order, with
//! columns `m,s0,s1` and, per arm `d`, a tabulated law on a `u` grid:
//! `q_<d>_<u>` (quantile), `b1_<d>_<u>` (mean of the lower tail of mass `u`)
//! and `b0_<d>_<u>` (mean of `Y ≥ q_d(u)`).

use crate::data::{Arm, ObservationTable};
use crate::error::{Error, Result};
use crate::law::{GridLaw, OutcomeLaw, Tail};
use crate::nuisance::{Floors, NuisanceBundle, Provenance};
use crate::simulation::{MetricRow, PowerRow};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        csv::ErrorKind::Utf8 { err, .. } => parse_err(line, format!("invalid UTF-8: {err}")),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            parse_err(line, format!("expected {expected_len} fields, found {len}"))
        }
        other => parse_err(line, format!("{other:?}")),
    }
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "NA"
}

fn parse_f64(field: &str, line: usize, col: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("column {col}: cannot read {field:?} as a number")))
}

fn parse_flag(field: &str, line: usize, col: &str) -> Result<u8> {
    field
        .trim()
        .parse::<u8>()
        .map_err(|_| parse_err(line, format!("column {col}: expected 0 or 1, found {field:?}")))
}

fn covariate_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix('x')?;
    if rest.is_empty() || rest.starts_with('0') || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

/// Column choices for [`read_observations`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationOptions {
    /// Weight column; when absent from the file every weight is 1.
    pub weight_col: String,
    /// Extra columns to return verbatim (e.g. a subgroup label).
    pub keep: Vec<String>,
}

impl Default for ObservationOptions {
    fn default() -> Self {
        ObservationOptions {
            weight_col: "weight".into(),
            keep: Vec::new(),
        }
    }
}

/// A parsed observation file.
#[derive(Debug, Clone)]
pub struct ObservationData {
    pub table: ObservationTable,
    /// Raw values of the requested extra columns.
    pub extra: BTreeMap<String, Vec<String>>,
}

/// Read an observation CSV. Content rules (binary flags, missing outcomes
/// under selection, NaN covariates) are left to [`crate::validate`].
pub fn read_observations<R: Read>(reader: R, opts: &ObservationOptions) -> Result<ObservationData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let mut seen = BTreeMap::new();
    for (j, h) in header.iter().enumerate() {
        if seen.insert(h.to_string(), j).is_some() {
            return Err(parse_err(1, format!("duplicate column {h:?}")));
        }
    }
    let need = |name: &str| find(name).ok_or_else(|| parse_err(1, format!("missing required column {name:?}")));
    let (cy, cs, cd) = (need("y")?, need("s")?, need("d")?);
    let cw = find(&opts.weight_col);
    if cw.is_none() {
        if opts.weight_col != "weight" {
            return Err(parse_err(1, format!("missing weight column {:?}", opts.weight_col)));
        }
        log::info!("no weight column; using unit weights");
    }
    let mut cov: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(j, h)| covariate_index(h).map(|k| (k, j)))
        .collect();
    cov.sort_unstable();
    if let Some((pos, (k, _))) = cov.iter().enumerate().find(|(pos, (k, _))| *k != pos + 1) {
        return Err(parse_err(
            1,
            format!("covariate columns must be x1..xp without gaps; x{} missing", if *k > pos + 1 { pos + 1 } else { *k }),
        ));
    }
    let keep: Vec<(String, usize)> = opts
        .keep
        .iter()
        .map(|name| find(name).map(|j| (name.clone(), j)).ok_or_else(|| parse_err(1, format!("missing column {name:?}"))))
        .collect::<Result<_>>()?;

    let (mut y, mut s, mut d, mut x, mut w) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut extra: BTreeMap<String, Vec<String>> = keep.iter().map(|(k, _)| (k.clone(), Vec::new())).collect();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let yf = &rec[cy];
        y.push(if is_missing(yf) { f64::NAN } else { parse_f64(yf, line, "y")? });
        s.push(parse_flag(&rec[cs], line, "s")?);
        d.push(parse_flag(&rec[cd], line, "d")?);
        w.push(match cw {
            Some(j) => parse_f64(&rec[j], line, &opts.weight_col)?,
            None => 1.0,
        });
        let row: Vec<f64> = cov
            .iter()
            .map(|&(k, j)| {
                let f = &rec[j];
                if is_missing(f) {
                    Ok(f64::NAN)
                } else {
                    parse_f64(f, line, &format!("x{k}"))
                }
            })
            .collect::<Result<_>>()?;
        x.push(row);
        for (name, j) in &keep {
            extra.get_mut(name).expect("declared above").push(rec[*j].to_string());
        }
    }
    if y.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    let table = ObservationTable::new(y, s, d, x, Some(w))?;
    Ok(ObservationData { table, extra })
}

/// Write a table in the observation CSV format; unselected outcomes as `NA`.
pub fn write_observations<W: Write>(writer: W, table: &ObservationTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "s".into(), "d".into(), "weight".into()];
    header.extend((1..=table.p()).map(|k| format!("x{k}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for i in 0..table.n() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(if table.s(i) == 1 { table.y(i).to_string() } else { "NA".into() });
        rec.push(table.s(i).to_string());
        rec.push(table.d(i).to_string());
        rec.push(table.weight(i).to_string());
        rec.extend(table.x(i).iter().map(f64::to_string));
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Default)]
struct ArmColumns {
    q: BTreeMap<u64, (f64, usize)>,
    b1: BTreeMap<u64, (f64, usize)>,
    b0: BTreeMap<u64, (f64, usize)>,
}

/// Split `q_1_0.25` style names into (kind, arm, u).
fn law_column(name: &str) -> Option<(&str, usize, f64)> {
    let mut parts = name.splitn(3, '_');
    let kind = parts.next()?;
    if !matches!(kind, "q" | "b0" | "b1") {
        return None;
    }
    let arm = match parts.next()? {
        "0" => 0,
        "1" => 1,
        _ => return None,
    };
    let u: f64 = parts.next()?.parse().ok()?;
    Some((kind, arm, u))
}

/// Read an external nuisance CSV for a table of `n` rows.
pub fn read_nuisances<R: Read>(reader: R, n: usize, floors: Floors) -> Result<NuisanceBundle> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing required column {name:?}")))
    };
    let (cm, c0, c1) = (find("m")?, find("s0")?, find("s1")?);
    let mut arms: [ArmColumns; 2] = Default::default();
    for (j, h) in header.iter().enumerate() {
        let Some((kind, arm, u)) = law_column(h) else {
            continue;
        };
        if !(0.0..=1.0).contains(&u) {
            return Err(parse_err(1, format!("column {h}: u must lie in [0,1]")));
        }
        let slot = match kind {
            "q" => &mut arms[arm].q,
            "b1" => &mut arms[arm].b1,
            _ => &mut arms[arm].b0,
        };
        if slot.insert(u.to_bits(), (u, j)).is_some() {
            return Err(parse_err(1, format!("duplicate grid column {h}")));
        }
    }
    for (d, a) in arms.iter().enumerate() {
        if a.q.is_empty() {
            return Err(parse_err(1, format!("no quantile columns q_{d}_<u> for arm {d}")));
        }
        if a.q.keys().ne(a.b1.keys()) || a.q.keys().ne(a.b0.keys()) {
            return Err(parse_err(1, format!("arm {d}: q, b1 and b0 columns must share one u grid")));
        }
    }
    // BTreeMap over bit patterns orders nonnegative floats correctly.
    let grids: [Vec<f64>; 2] = [0, 1].map(|d| arms[d].q.values().map(|v| v.0).collect());

    let (mut m, mut s0, mut s1, mut laws) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        m.push(parse_f64(&rec[cm], line, "m")?);
        s0.push(parse_f64(&rec[c0], line, "s0")?);
        s1.push(parse_f64(&rec[c1], line, "s1")?);
        let mut pair = Vec::with_capacity(2);
        for d in 0..2 {
            let col = |map: &BTreeMap<u64, (f64, usize)>, kind: &str| -> Result<Vec<f64>> {
                map.values()
                    .map(|(u, j)| {
                        let v = parse_f64(&rec[*j], line, &format!("{kind}_{d}_{u}"))?;
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(parse_err(line, format!("{kind}_{d}_{u}: non-finite value")))
                        }
                    })
                    .collect()
            };
            let law = GridLaw::new(
                grids[d].clone(),
                col(&arms[d].q, "q")?,
                col(&arms[d].b1, "b1")?,
                col(&arms[d].b0, "b0")?,
            )
            .map_err(|e| parse_err(line, e.to_string()))?;
            pair.push(Arc::new(OutcomeLaw::Grid(law)));
        }
        let l1 = pair.pop().expect("two arms");
        let l0 = pair.pop().expect("two arms");
        laws.push([l0, l1]);
    }
    if laws.len() != n {
        return Err(Error::Invalid(format!(
            "nuisance file has {} rows but the data have {n}",
            laws.len()
        )));
    }
    NuisanceBundle::assemble(m, s0, s1, laws, Provenance::External, floors)
}

/// Write a bundle in the nuisance CSV format, tabulating each law on `grid`.
pub fn write_nuisances<W: Write>(writer: W, bundle: &NuisanceBundle, grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] < 0.0 || grid[grid.len() - 1] > 1.0 {
        return Err(Error::Invalid("tabulation grid must increase within [0,1]".into()));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["m".to_string(), "s0".into(), "s1".into()];
    for d in 0..2 {
        for kind in ["q", "b1", "b0"] {
            header.extend(grid.iter().map(|u| format!("{kind}_{d}_{u}")));
        }
    }
    wtr.write_record(&header).map_err(csv_err)?;
    for i in 0..bundle.n() {
        let mut rec = vec![bundle.m(i).to_string(), bundle.s0(i).to_string(), bundle.s1(i).to_string()];
        for arm in [Arm::Control, Arm::Treated] {
            let law = bundle.law(i, arm);
            rec.extend(grid.iter().map(|u| law.quantile(*u).to_string()));
            rec.extend(grid.iter().map(|u| law.tail_mean(Tail::Lower, *u).to_string()));
            rec.extend(grid.iter().map(|u| law.tail_mean(Tail::Upper, 1.0 - u).to_string()));
        }
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Metrics table, one row per (n, estimator).
pub fn write_metrics<W: Write>(writer: W, rows: &[MetricRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Power curves, one row per (n, estimator, hypothesis).
pub fn write_power<W: Write>(writer: W, rows: &[PowerRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_missing_outcomes_and_weights() {
        let csv = "y,s,d,weight,x1,x2\n1.5,1,0,2,0.1,3\nNA,0,1,1,0.2,4\n,0,0,0.5,0.3,5\n";
        let data = read_observations(csv.as_bytes(), &ObservationOptions::default()).unwrap();
        let t = &data.table;
        assert_eq!(t.n(), 3);
        assert_eq!(t.p(), 2);
        assert_eq!(t.y(0), 1.5);
        assert!(t.y_raw()[1].is_nan() && t.y_raw()[2].is_nan());
        assert_eq!(t.weights(), &[2.0, 1.0, 0.5]);
        assert_eq!(t.x(2), &[0.3, 5.0]);
        assert!(crate::validate(t).passed());
    }

    #[test]
    fn covariates_are_ordered_by_index() {
        let csv = "x2,y,x1,s,d\n20,1,10,1,1\n";
        let t = read_observations(csv.as_bytes(), &ObservationOptions::default()).unwrap().table;
        assert_eq!(t.x(0), &[10.0, 20.0]);
        assert_eq!(t.weights(), &[1.0]);
    }

    #[test]
    fn rejects_malformed_input() {
        let opts = ObservationOptions::default();
        for bad in [
            "y,s\n1,1\n",
            "y,s,d,x2\n1,1,1,0\n",
            "y,s,d\n1,0.5,1\n",
            "y,s,d\nabc,1,1\n",
            "y,s,d\n1,1\n",
            "y,s,d,y\n1,1,1,1\n",
            "y,s,d\n",
        ] {
            assert!(read_observations(bad.as_bytes(), &opts).is_err(), "{bad:?}");
        }
        let err = read_observations("y,s,d\n1,1,1\n2,x,0\n".as_bytes(), &opts).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn observation_round_trip() {
        let t = ObservationTable::new(
            vec![0.1 + 0.2, f64::NAN],
            vec![1, 0],
            vec![1, 0],
            vec![vec![1e-300, -0.0], vec![3.25, 7.0]],
            Some(vec![1.0, 0.125]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_observations(&mut buf, &t).unwrap();
        let back = read_observations(&buf[..], &ObservationOptions::default()).unwrap().table;
        assert_eq!(back.y(0).to_bits(), t.y(0).to_bits());
        assert_eq!(back.x(0), t.x(0));
        assert_eq!(back.weights(), t.weights());
    }

    #[test]
    fn nuisance_round_trip_on_grid_points() {
        let laws = vec![[
            Arc::new(OutcomeLaw::Point(0.0)),
            Arc::new(OutcomeLaw::uniform_mixture(&[(0.0, 1.0, 0.6), (1.0, 2.0, 0.4)]).unwrap()),
        ]];
        let b = NuisanceBundle::assemble(vec![0.5], vec![0.3], vec![0.5], laws, Provenance::Oracle, Floors::default()).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let mut buf = Vec::new();
        write_nuisances(&mut buf, &b, &grid).unwrap();
        let back = read_nuisances(&buf[..], 1, Floors::default()).unwrap();
        assert_eq!(back.provenance(), Provenance::External);
        assert_eq!(back.s0(0), 0.3);
        for u in &grid {
            assert!((back.quantile(0, 1, *u) - b.quantile(0, 1, *u)).abs() < 1e-12);
            assert!((back.trunc_mean(0, 1, 1, *u) - b.trunc_mean(0, 1, 1, *u)).abs() < 1e-12);
            assert!((back.trunc_mean(0, 0, 1, *u) - b.trunc_mean(0, 0, 1, *u)).abs() < 1e-12);
        }
        assert!(read_nuisances(&buf[..], 2, Floors::default()).is_err());
    }

    #[test]
    fn nuisance_grids_must_match() {
        let csv = "m,s0,s1,q_0_0,b1_0_0,b0_0_0,q_1_0,q_1_1,b1_1_0,b0_1_0\n0.5,0.5,0.5,0,0,0,0,1,0,0\n";
        assert!(read_nuisances(csv.as_bytes(), 1, Floors::default()).is_err());
    }
}
