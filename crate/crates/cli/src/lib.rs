//! Command-line front end: argument definitions, config resolution and the
//! four subcommands.

pub mod args;
pub mod design;
pub mod error;
pub mod estimate;
pub mod nuisance;

use args::{Cli, Command};
use error::CliError;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Open `path` for writing, or stdout when absent.
pub(crate) fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            error::usage(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub(crate) fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| error::usage(format!("cannot open {}: {e}", path.display())))
}

/// Run a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(error::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| error::usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Estimate(a) => estimate::cmd_estimate(a),
        Command::Simulate(a) => design::cmd_simulate(a),
        Command::BoundsCurve(a) => design::cmd_bounds_curve(a),
        Command::Generate(a) => design::cmd_generate(a),
    }
}
