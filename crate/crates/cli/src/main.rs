use clap::Parser;
use std::process::ExitCode;
use strata_bounds_cli::args::Cli;

fn init_logging() {
    let env = env_logger::Env::new().filter_or("STRATA_BOUNDS_LOG", "warn");
    env_logger::Builder::from_env(env).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    match strata_bounds_cli::run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
