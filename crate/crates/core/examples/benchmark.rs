//! Print the Monte Carlo table for one panel.
//!
//! cargo run --release -p strata-bounds --example benchmark -- a 2000

use strata_bounds::simulation::{run_experiment, DgpConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let panel = args.next().and_then(|s| s.chars().next()).unwrap_or('a');
    let reps = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);
    let config = DgpConfig {
        reps,
        ..DgpConfig::panel(panel)?
    };
    let report = run_experiment(&config)?;
    println!("panel {panel}: target {:.4}", report.target.target);
    println!("{:>5} {:<22} {:>8} {:>8} {:>8} {:>8} {:>8}", "n", "estimator", "bias", "rmse", "size", "mc_sd", "mean_se");
    for m in &report.metrics {
        println!(
            "{:>5} {:<22} {:>8.3} {:>8.3} {:>8.3} {:>8.4} {:>8.4}",
            m.n, m.estimator, m.bias, m.rmse, m.size, m.mc_sd, m.mean_se
        );
    }
    Ok(())
}
