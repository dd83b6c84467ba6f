use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pwl_rotor::Backend;
use pwl_rotor_cli::{execute, Command, Format, JobConfig};

/// Rotation numbers, conjugacies, mode-locking and scaling data for
/// piecewise-linear circle maps.
#[derive(Debug, Parser)]
#[command(name = "pwl-rotor", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON job file
    #[arg(long)]
    config: PathBuf,
    /// output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    workers: Option<usize>,
    /// rational or float
    #[arg(long)]
    backend: Option<Backend>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PWL_ROTOR_LOG", "warn")).init();
    let cli = Cli::parse();
    let mut cfg = match JobConfig::from_file(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(pwl_rotor_cli::exit_code(&e) as u8);
        }
    };
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    if cli.format.is_some() {
        cfg.format = cli.format;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.backend.is_some() {
        cfg.backend = cli.backend;
    }
    ExitCode::from(execute(cli.command, &cfg) as u8)
}
