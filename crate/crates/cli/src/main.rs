use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use extremesum_cli::{run_command, Command, RunOptions, EXIT_INFEASIBLE};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Dump one (X, Y) path.
    Simulate,
    /// Print the deterministic scaling constants.
    Scaling,
    /// Monte Carlo replicates at one sample size.
    Mc,
    /// Monte Carlo along `n_grid`.
    Convergence,
    /// Power-rank, derivative-integral and reduction diagnostics.
    Diag,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "extremesum", version, about = "Extreme sums of subordinated long-memory processes")]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Experiment config (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write the simulated path as little-endian binary.
    #[arg(long)]
    binary: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Format::Csv = cli.format;
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_INFEASIBLE as u8);
        }
    };
    let cmd = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Scaling => Command::Scaling,
        Cmd::Mc => Command::Mc,
        Cmd::Convergence => Command::Convergence,
        Cmd::Diag => Command::Diag,
    };
    let opts = RunOptions { out: cli.out, threads: cli.threads, binary: cli.binary };
    ExitCode::from(run_command(cmd, &text, &opts) as u8)
}
