//! `driftbench`: benchmark hourly load forecasters on streams with regime
//! shifts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use driftbench::commands::{self, Invocation, OutputFormat};

#[derive(Parser)]
#[command(
    name = "driftbench",
    version,
    about = "Streaming benchmark for hourly load forecasting under regime shifts",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config end to end without running the experiment
    Validate(CommonArgs),
    /// Run one experiment and append per-period rows to the results CSV
    Run(CommonArgs),
    /// Run every method × feasible feature set for one dataset
    Sweep(CommonArgs),
    /// Random-search the method's hyperparameters on the validation month
    Hpo(CommonArgs),
    /// Repeat the run over consecutive seeds and append every row
    Replicate(CommonArgs),
    /// Aggregate a results CSV into the method × feature table
    Report(CommonArgs),
    /// Generate the synthetic dataset CSVs from the config
    Synth(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML); for `report`, the results CSV to aggregate
    #[arg(long)]
    config: PathBuf,
    /// Output path: results CSV, report file, or synth output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Patch a config key before running, e.g. --override params.lr=1e-3
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for sweep and replicate fan-out
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Report output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

impl CommonArgs {
    fn into_invocation(self) -> Invocation {
        Invocation {
            config: self.config,
            out: self.out,
            overrides: self.overrides,
            workers: self.workers,
            format: match self.format {
                Format::Csv => OutputFormat::Csv,
                Format::Markdown => OutputFormat::Markdown,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate(a) => commands::validate(&a.into_invocation()),
        Command::Run(a) => commands::run(&a.into_invocation()),
        Command::Sweep(a) => commands::sweep(&a.into_invocation()),
        Command::Hpo(a) => commands::hpo(&a.into_invocation()),
        Command::Replicate(a) => commands::replicate(&a.into_invocation()),
        Command::Report(a) => commands::report(&a.into_invocation()),
        Command::Synth(a) => commands::synth(&a.into_invocation()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
