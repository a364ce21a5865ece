//! `llgs`: command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use llgs_core::io::{read_profile, ResultBundle};
use llgs_core::par::{self, Execution};
use llgs_core::Error;

use commands::Ctx;

#[derive(Parser)]
#[command(name = "llgs", version, about = "Domain walls of the LLGS equation on nanowires")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Profile JSON to start from (continue, center).
    #[arg(long, global = true)]
    seed_profile: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Regime, thresholds and spatial eigenvalues of the homogeneous wall.
    Classify,
    /// Splitting matrix and its kernel.
    Melnikov,
    /// Energy-gap expansion and measured sweeps about the center point.
    Center,
    /// Shoot from the unstable manifold to the theta = pi chart.
    Shoot,
    /// Continue a wall in one parameter.
    Continue,
    /// Freezing-method time integration.
    Freeze,
    /// Stability regions of the poles on an (h, c_cp) grid.
    StabilityMap,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Melnikov => "melnikov",
            Command::Center => "center",
            Command::Shoot => "shoot",
            Command::Continue => "continue",
            Command::Freeze => "freeze",
            Command::StabilityMap => "stability-map",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(m) => Failure::Config(m),
            Error::Orientation | Error::Regime(_) => Failure::Config(e.to_string()),
            e => Failure::Solver(e),
        }
    }
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, serde_json::Value), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let cfg = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, value))
}

fn execute<T: DeserializeOwned>(
    cli: &Cli,
    ctx: &Ctx,
    run: impl FnOnce(&T, &mut ResultBundle, &Ctx) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let path = cli.config.as_deref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let (cfg, echo) = load::<T>(path)?;
    let mut bundle = ResultBundle::create(&cli.out, cli.command.name(), echo).map_err(Failure::Solver)?;
    run(&cfg, &mut bundle, ctx)?;
    bundle.finish().map_err(Failure::Solver)?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let exec = match cli.threads {
        Some(0) => return Err(Failure::Config("--threads must be >= 1".into())),
        Some(1) => Execution::Sequential,
        Some(n) => {
            par::configure_threads(n);
            Execution::Parallel
        }
        None => Execution::default(),
    };
    let seed = match &cli.seed_profile {
        Some(_) if !matches!(cli.command, Command::Continue | Command::Center) => {
            return Err(Failure::Config(format!("--seed-profile does not apply to {}", cli.command.name())))
        }
        Some(p) => Some(read_profile(p).map_err(|e| match e {
            Error::Io(m) => Failure::Config(m),
            e => e.into(),
        })?),
        None => None,
    };
    let ctx = Ctx { exec, seed };
    match cli.command {
        Command::Classify => execute(cli, &ctx, commands::classify),
        Command::Melnikov => execute(cli, &ctx, commands::melnikov),
        Command::Center => execute(cli, &ctx, commands::center),
        Command::Shoot => execute(cli, &ctx, commands::shoot),
        Command::Continue => execute(cli, &ctx, commands::continue_cmd),
        Command::Freeze => execute(cli, &ctx, commands::freeze),
        Command::StabilityMap => execute(cli, &ctx, commands::stability),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e}");
            ExitCode::from(3)
        }
    }
}
