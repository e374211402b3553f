use crate::args::NuisanceArgs;
use crate::error::{usage, CliError};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use strata_bounds::identification::SupportBounds;
use strata_bounds::io::read_nuisances;
use strata_bounds::nuisance::{
    crossfit, CellColumn, CellRule, CellSpec, Floors, LearnerSpec, NuisanceBundle, PropensityLearner, Provenance,
};
use strata_bounds::simulation::DEFAULT_SEED;
use strata_bounds::ObservationTable;

/// Nuisance options as they may appear in a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceFile {
    pub nuisance_file: Option<PathBuf>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub propensity: Option<f64>,
    pub cells: Option<String>,
    pub lenient_cells: Option<bool>,
    pub m_floor: Option<f64>,
    pub s_floor: Option<f64>,
    pub support: Option<[f64; 4]>,
    pub weights_col: Option<String>,
}

/// Resolved nuisance options.
#[derive(Debug, Clone, Serialize)]
pub struct NuisanceSettings {
    pub nuisance_file: Option<PathBuf>,
    pub folds: usize,
    pub seed: u64,
    pub propensity: Option<f64>,
    pub cells: Option<String>,
    pub lenient_cells: bool,
    pub m_floor: f64,
    pub s_floor: f64,
    pub support: Option<[f64; 4]>,
    pub weights_col: String,
}

impl NuisanceSettings {
    /// Flags over file values over defaults.
    pub fn resolve(cli: &NuisanceArgs, file: NuisanceFile) -> Result<Self, CliError> {
        let floors = Floors::default();
        let support = match &cli.support {
            Some(v) => Some(<[f64; 4]>::try_from(v.as_slice()).map_err(|_| usage("--support takes four values"))?),
            None => file.support,
        };
        Ok(NuisanceSettings {
            nuisance_file: cli.nuisance_file.clone().or(file.nuisance_file),
            folds: cli.folds.or(file.folds).unwrap_or(5),
            seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            propensity: cli.propensity.or(file.propensity),
            cells: cli.cells.clone().or(file.cells),
            lenient_cells: cli.lenient_cells || file.lenient_cells.unwrap_or(false),
            m_floor: cli.m_floor.or(file.m_floor).unwrap_or(floors.m),
            s_floor: cli.s_floor.or(file.s_floor).unwrap_or(floors.s),
            support,
            weights_col: cli.weights_col.clone().or(file.weights_col).unwrap_or_else(|| "weight".into()),
        })
    }

    /// True when the bundle's propensity is the design one rather than a fitted model.
    pub fn known_propensity(&self, bundle: &NuisanceBundle) -> bool {
        bundle.provenance() != Provenance::CrossFitted || self.propensity.is_some()
    }

    pub fn build(&self, table: &ObservationTable) -> Result<NuisanceBundle, CliError> {
        let floors = Floors::new(self.m_floor, self.s_floor)?;
        let bundle = match &self.nuisance_file {
            Some(path) => read_nuisances(crate::open(path)?, table.n(), floors)?,
            None => {
                let spec = LearnerSpec {
                    propensity: match self.propensity {
                        Some(v) => PropensityLearner::Constant(v),
                        None => PropensityLearner::Logistic(None),
                    },
                    selection_columns: None,
                    cells: CellSpec {
                        columns: match &self.cells {
                            Some(s) => parse_cells(s, table.p())?,
                            None => Vec::new(),
                        },
                        lenient: self.lenient_cells,
                    },
                };
                crossfit(table, &spec, self.folds, self.seed, floors)?
            }
        };
        Ok(match self.support {
            Some([l0, h0, l1, h1]) => bundle.with_support(SupportBounds::new([l0, l1], [h0, h1])?),
            None => bundle,
        })
    }
}

/// Parse `x2:5,x1` into cell columns (zero-based).
pub fn parse_cells(spec: &str, p: usize) -> Result<Vec<CellColumn>, CliError> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (name, bins) = match item.trim().split_once(':') {
                Some((n, b)) => (n, Some(b)),
                None => (item.trim(), None),
            };
            let k: usize = name
                .strip_prefix('x')
                .and_then(|k| k.parse().ok())
                .filter(|k| (1..=p).contains(k))
                .ok_or_else(|| usage(format!("cell column {name:?} is not one of x1..x{p}")))?;
            let rule = match bins {
                None => CellRule::Discrete,
                Some(b) => CellRule::Bins(
                    b.parse()
                        .ok()
                        .filter(|b| *b > 0)
                        .ok_or_else(|| usage(format!("bad bin count in {item:?}")))?,
                ),
            };
            Ok(CellColumn { column: k - 1, rule })
        })
        .collect()
}
