use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "strata-bounds",
    version,
    about = "Bounds on principal-strata treatment effects under sample selection"
)]
pub struct Cli {
    /// Worker threads; defaults to all available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate bounds on a data file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment and write the metrics table.
    Simulate(SimulateArgs),
    /// Smooth bounds over a grid of smoothing parameters.
    BoundsCurve(CurveArgs),
    /// Draw a sample from a simulation design, optionally with its oracle nuisances.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Sharp,
    Trim,
    Switch,
    Smooth,
    Inefficient,
}

impl MethodArg {
    pub fn name(self) -> &'static str {
        match self {
            MethodArg::Sharp => "sharp",
            MethodArg::Trim => "trim",
            MethodArg::Switch => "switch",
            MethodArg::Smooth => "smooth",
            MethodArg::Inefficient => "inefficient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    L,
    U,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

/// Nuisance source: an external file, or cross-fitted built-in learners.
#[derive(Args, Debug, Clone, Default)]
pub struct NuisanceArgs {
    /// Per-row nuisance CSV (m, s0, s1 and tabulated laws) instead of learners.
    #[arg(long)]
    pub nuisance_file: Option<PathBuf>,
    /// Cross-fitting folds.
    #[arg(long = "folds")]
    pub folds: Option<usize>,
    /// Seed for the fold assignment.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Known constant treatment probability (e.g. a randomized design).
    #[arg(long)]
    pub propensity: Option<f64>,
    /// Outcome-law cells: comma list of `xk` (discrete) or `xk:B` (B quantile bins).
    #[arg(long)]
    pub cells: Option<String>,
    /// Use the pooled arm law for cells without selected outcomes.
    #[arg(long)]
    pub lenient_cells: bool,
    /// Propensity overlap floor.
    #[arg(long)]
    pub m_floor: Option<f64>,
    /// Selection overlap floor.
    #[arg(long)]
    pub s_floor: Option<f64>,
    /// Outcome support `lo0,hi0,lo1,hi1`; defaults to the observed range when needed.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub support: Option<Vec<f64>>,
    /// Name of the weight column.
    #[arg(long)]
    pub weights_col: Option<String>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Observation CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Estimators to run.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub method: Vec<MethodArg>,
    /// at, c, def, nt or em.
    #[arg(long)]
    pub stratum: Option<String>,
    #[arg(long, value_enum)]
    pub side: Option<SideArg>,
    /// Smoothing parameters for the smooth estimator.
    #[arg(long, value_delimiter = ',')]
    pub h: Vec<f64>,
    /// Switching threshold: `auto` or a value.
    #[arg(long)]
    pub rho: Option<String>,
    /// Trim rows with |p0 − 1| at or below this (default: exact p0 = 1).
    #[arg(long)]
    pub eps_trim: Option<f64>,
    /// Use known-propensity moments for trim and switch.
    #[arg(long)]
    pub known_propensity: bool,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Mean-dominance refinement.
    #[arg(long)]
    pub dominance: bool,
    /// Column with subgroup labels for heterogeneous bounds.
    #[arg(long)]
    pub group_col: Option<String>,
    /// Tolerance for the p0 = 1 label.
    #[arg(long)]
    pub eps0: Option<f64>,
    #[command(flatten)]
    pub nuisance: NuisanceArgs,
    /// Write results here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

/// Design selection shared by `simulate`, `bounds-curve` and `generate`.
#[derive(Args, Debug, Clone, Default)]
pub struct DesignArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Benchmark share preset: a, b or c.
    #[arg(long)]
    pub panel: Option<char>,
    /// appendix_c or single_index.
    #[arg(long)]
    pub dgp: Option<String>,
    /// Base seed for all replication streams.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Metrics CSV; stdout when omitted.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Power-curve CSV.
    #[arg(long)]
    pub power: Option<PathBuf>,
    /// JSON with the resolved config, targets and failed replications.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    /// Smoothing grid.
    #[arg(long, value_delimiter = ',')]
    pub h: Vec<f64>,
    /// Observation CSV; otherwise a design sample with oracle nuisances is used.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Learner options for `--data`; `--seed` also seeds the design sample.
    #[command(flatten)]
    pub nuisance: NuisanceArgs,
    /// Experiment config JSON for design mode.
    #[arg(long)]
    pub dgp_config: Option<PathBuf>,
    /// Benchmark share preset: a, b or c.
    #[arg(long)]
    pub panel: Option<char>,
    /// appendix_c or single_index.
    #[arg(long)]
    pub dgp: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Sample size for design mode.
    #[arg(long)]
    pub n: Option<usize>,
    /// Replication stream for design mode.
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
    /// Population bounds of the design by quadrature (no sampling).
    #[arg(long)]
    pub population: bool,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Replication stream.
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
    /// Observation CSV; stdout when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write oracle nuisances tabulated on a u grid.
    #[arg(long)]
    pub nuisance_out: Option<PathBuf>,
    /// Points of the u grid for `--nuisance-out`.
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
}
