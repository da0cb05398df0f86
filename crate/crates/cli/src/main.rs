//! Command-line entry point: staged and end-to-end runs of the recovery
//! pipeline plus the verification suite.

mod commands;
mod error;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "modsc", version, about = "Modular structure recovery from decoder Jacobians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (TOML). Staged commands fall back to the run
    /// directory's snapshot, other commands to the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace an existing non-empty run directory.
    #[arg(long)]
    pub force: bool,
    /// Worker thread cap.
    #[arg(long, env = "MODSC_THREADS")]
    pub threads: Option<usize>,
    /// Progress messages on stderr.
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Structure, ground truth and trajectories.
    Generate(Common),
    /// Self-expression over the λ grid with λ selection.
    Solve(Common),
    /// Clustering of the selected coefficient matrix.
    Cluster(Common),
    /// Scores against ground truth and aggregate tables.
    Evaluate(Common),
    /// Verification suite; exit status 3 when a check fails.
    Verify(Common),
    /// generate, solve, cluster and evaluate in one run.
    Full(Common),
    /// Print the default config.
    ConfigTemplate {
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::ConfigTemplate { out } => return commands::config_template(out.as_deref()),
        Command::Generate(c)
        | Command::Solve(c)
        | Command::Cluster(c)
        | Command::Evaluate(c)
        | Command::Verify(c)
        | Command::Full(c) => c.clone(),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Generate(c) => commands::generate(&c),
        Command::Solve(c) => commands::solve(&c),
        Command::Cluster(c) => commands::cluster(&c),
        Command::Evaluate(c) => commands::evaluate(&c),
        Command::Verify(c) => commands::verify(&c),
        Command::Full(c) => commands::full(&c),
        Command::ConfigTemplate { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
