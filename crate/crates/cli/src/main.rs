use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("identity check failed: {0}")]
    Identity(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Identity(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "abc-hydro", version, about = "ABC exclusion process experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run replicas of the particle system and write mean density profiles.
    Simulate(Common),
    /// Solve the hydrodynamic equations and write fields and weak residuals.
    Solve(Common),
    /// Compare replica-mean profiles with the PDE along the N list.
    Compare(Common),
    /// Run the exact small-system identity suite.
    Oracle(Common),
    /// Repeat a command over the values of one configuration key.
    Sweep(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `sim.seed` and `oracle.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `key=value` override, e.g. `--set model.beta=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::Solve(c) => ("solve", c),
        Command::Compare(c) => ("compare", c),
        Command::Oracle(c) => ("oracle", c),
        Command::Sweep(c) => ("sweep", c),
    };
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("sim.seed={seed}"));
        overrides.push(format!("oracle.seed={seed}"));
    }
    let (cfg, table) = ExperimentConfig::load(common.config.as_deref(), &overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    std::fs::create_dir_all(&common.out)?;
    pool.install(|| {
        if name == "sweep" {
            commands::sweep(&cfg, &table, &common.out)
        } else {
            commands::run_command(name, &cfg, &common.out)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("abc-hydro: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
