mod aggregate;
mod error;
mod perturb;
mod rank;
mod report;
mod serve;
mod sysid;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "arena", version, about = "Robot policy evaluation arena tools")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the main result here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a Bradley-Terry leaderboard from a comparison log.
    Rank(rank::Args),
    /// Per-policy FINAL_30 means and SEM from score series files.
    Report(report::Args),
    /// Aggregate each frame-score series in a file.
    Aggregate(aggregate::Args),
    /// Generate perturbed scene variants.
    #[command(subcommand)]
    Perturb(perturb::Command),
    /// Identify PD gains from recorded trajectories.
    #[command(subcommand)]
    Sysid(sysid::Command),
    /// Run the HTTP service.
    Serve(serve::Args),
}

/// Options shared by every subcommand.
pub struct Global {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Global {
    /// Writes `text` to `--output` or standard output.
    pub fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.output {
            Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let global = Global { seed: cli.seed, output: cli.output, format: cli.format };
    let result = match cli.command {
        Command::Rank(a) => rank::run(&global, a),
        Command::Report(a) => report::run(&global, a),
        Command::Aggregate(a) => aggregate::run(&global, a),
        Command::Perturb(c) => perturb::run(&global, c),
        Command::Sysid(c) => sysid::run(&global, c),
        Command::Serve(a) => serve::run(&global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
