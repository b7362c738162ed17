//! `exposure-lab`: exact truth, diagnostics, estimates and simulations for
//! exposure-mapping experiments.

mod commands;
mod config;
mod data;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::{OverrideArg, RunConfig};
use error::CliError;
use output::Format;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Print the resolved scenario as JSON.
    Describe,
    /// Exact ground truth by enumeration.
    Truth,
    /// Dependence and positivity diagnostics.
    Diagnose,
    /// Point and variance estimates for an observed dataset.
    Estimate,
    /// Monte Carlo replications of the estimators.
    Simulate,
    /// RMSE across sizes and its log-log slope.
    Rates,
    /// Interval coverage of the HT estimator.
    Coverage,
    /// Exact bias of the variance estimator, term by term.
    Varbias,
}

#[derive(Debug, Parser)]
#[command(name = "exposure-lab", version, about = "Exposure-mapping experiments: truth, diagnostics, estimates, simulations")]
pub struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON config, or a bare scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exposure label of the first arm (default 1).
    #[arg(long)]
    a: Option<usize>,
    /// Exposure label of the second arm (default 0).
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Interval level.
    #[arg(long)]
    level: Option<f64>,
    /// Exponent of the design dependence measure.
    #[arg(long)]
    q: Option<f64>,
    /// Exponent of the positivity measure.
    #[arg(long)]
    p: Option<f64>,
    /// Pair override for the variance estimator.
    #[arg(long = "override", value_enum)]
    override_policy: Option<OverrideArg>,
    /// Sizes for `rates`, comma separated.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    /// Dataset CSV for `estimate`: unit,z,exposure,y[,x1..xp].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Marginal probabilities CSV for `estimate`: unit,d,pi.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Joint probabilities CSV for `estimate`: i,j,d1,d2,pij.
    #[arg(long)]
    joint: Option<PathBuf>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn single_threaded<T: Send>(f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?
        .install(f)
}

fn run(args: &Args) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    let tabular = matches!(args.command, Command::Simulate | Command::Rates | Command::Coverage);
    let format = args.format.unwrap_or(if tabular { Format::Csv } else { Format::Json });
    let text = match args.command {
        Command::Describe => single_threaded(|| commands::describe(&cfg, format))?,
        Command::Truth => single_threaded(|| commands::truth(&cfg, format))?,
        Command::Diagnose => single_threaded(|| commands::diagnose(&cfg, format))?,
        Command::Estimate => single_threaded(|| commands::estimate(&cfg, args, format))?,
        Command::Varbias => single_threaded(|| commands::varbias(&cfg, format))?,
        Command::Simulate => commands::simulate(&cfg, format)?,
        Command::Rates => commands::rates(&cfg, format)?,
        Command::Coverage => commands::coverage(&cfg, format)?,
    };
    output::emit(&text, args.out.as_deref())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
