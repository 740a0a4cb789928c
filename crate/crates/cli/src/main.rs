mod commands;
mod config;
mod output;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{RawConfig, RunConfig};

/// Exit status when the configuration or command line is unusable.
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "geoflow", version, about = "Smeared-interface geometry, shape gradients and flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the smeared energy of the configured functional.
    Integrate(RunArgs),
    /// Compare the shape gradient against the finite-difference oracle.
    Gradient(RunArgs),
    /// Run the identity, integration-by-parts and equivalence checks.
    Validate(RunArgs),
    /// Run a gradient-descent flow and write its trajectory.
    Flow(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn init_threads() -> Result<(), String> {
    let n = match std::env::var("GEOFLOW_THREADS") {
        Err(_) => return Ok(()),
        Ok(v) if v.trim().is_empty() => return Ok(()),
        Ok(v) => v.trim().parse::<usize>().map_err(|_| format!("GEOFLOW_THREADS must be a nonnegative integer, got `{v}`"))?,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn load(args: &RunArgs) -> Result<RunConfig, config::ConfigError> {
    let mut raw = RawConfig::load(&args.config)?;
    for s in &args.set {
        raw.apply_override(s)?;
    }
    RunConfig::from_raw(&raw)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("geoflow: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let args = match &cli.command {
        Command::Integrate(a) | Command::Gradient(a) | Command::Validate(a) | Command::Flow(a) => a,
    };
    let cfg = match load(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("geoflow: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut out = io::stdout().lock();
    let result = match &cli.command {
        Command::Integrate(_) => commands::integrate(&cfg, &mut out),
        Command::Gradient(_) => commands::gradient(&cfg, &mut out),
        Command::Validate(_) => commands::validate(&cfg, &mut out),
        Command::Flow(_) => commands::flow(&cfg, &mut out),
    };
    match result {
        Ok(checks) => {
            if !checks.is_empty() && commands::print_checks(&mut out, &checks).is_err() {
                return ExitCode::FAILURE;
            }
            let _ = out.flush();
            if checks.iter().all(|c| c.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            let _ = out.flush();
            eprintln!("geoflow: {e}");
            ExitCode::FAILURE
        }
    }
}
