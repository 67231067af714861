mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_lp::report::hex_digest;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Output;

#[derive(Parser)]
#[command(
    name = "levy-lp",
    version,
    about = "Symbols, densities, solvers and estimate checks for scalable Lévy operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for Monte Carlo steps; overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// ψ on the dual lattice of the grid.
    Symbol,
    /// Transition densities at the configured times.
    Density,
    /// Terminal values of sampled paths.
    Simulate,
    /// Parabolic or elliptic solve with residual report.
    Solve,
    /// Selected estimate and assumption checks.
    Verify,
    /// Calderón–Zygmund decomposition and weak-(1,1) check.
    Cz,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Symbol => "symbol",
            Command::Density => "density",
            Command::Simulate => "simulate",
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Cz => "cz",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let mut out = Output::new(&cli.out)?;
    let result = match cli.command {
        Command::Symbol => commands::symbol(&cfg, &mut out),
        Command::Density => commands::density(&cfg, &mut out),
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Solve => commands::solve(&cfg, &mut out),
        Command::Verify => commands::verify(&cfg, &mut out),
        Command::Cz => commands::cz(&cfg, &mut out),
    };
    // Verification failures still leave their reports behind.
    if matches!(result, Ok(()) | Err(CliError::Verification(_))) {
        out.finish(cli.command.name(), &hex_digest(text.as_bytes()), cfg.seed)?;
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("levy-lp {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
