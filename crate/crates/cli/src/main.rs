//! `ptfm`: identify, fit and report Poisson transfer function models of
//! daily count series, and simulate data sets with known structure.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 estimation did not converge, 1 anything else.

mod config;
mod plot;
mod report;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "ptfm", version, about = "Poisson transfer function models for daily counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the identification protocol: prewhitening, delays and orders.
    Identify(IdentifyArgs),
    /// Estimate the model, or evaluate supplied coefficients, and tabulate relative risks.
    Fit(FitArgs),
    /// Generate a synthetic data set from a scenario.
    Simulate(SimulateArgs),
    /// Tables and plots of observed against fitted counts from a fit report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data file; overrides the configured path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed recorded in the report.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    #[command(flatten)]
    common: Common,
    /// Largest delay examined in the cross-correlation.
    #[arg(long)]
    max_lag: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Identification report to take the structure from; identification runs when absent.
    #[arg(long)]
    structure: Option<PathBuf>,
    /// Coefficients to evaluate instead of estimating (TOML).
    #[arg(long)]
    fixed_params: Option<PathBuf>,
    /// Largest delay examined when identification runs.
    #[arg(long)]
    max_lag: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario file (TOML); the built-in three-pollutant scenario when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Fit report written by `ptfm fit`.
    report: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Number of residual autocorrelation lags.
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    /// Skip the SVG plots.
    #[arg(long)]
    no_plots: bool,
}

/// Marks an error as caused by configuration or command-line input.
#[derive(Debug)]
pub struct ConfigError;

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid configuration")
    }
}

impl std::error::Error for ConfigError {}

/// Marks an error as caused by an unreadable or malformed input file.
#[derive(Debug)]
pub struct DataError;

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid input data")
    }
}

impl std::error::Error for DataError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<DataError>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<ptfm::Error>() {
            use ptfm::Error::*;
            return match e {
                Convergence { .. } | Divergence { .. } | NoCandidate(_) | Unstable(_) | SingularGain(_) => 4,
                Parse { .. } | Io(_) | Misaligned(_) | UnknownSeries(_) | Precondition(_) | Domain(_) => 3,
            };
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Identify(a) => run::identify(&a.common, a.max_lag),
        Command::Fit(a) => run::fit(&a.common, a.structure.as_deref(), a.fixed_params.as_deref(), a.max_lag),
        Command::Simulate(a) => run::simulate(a.config.as_deref(), &a.out, a.seed),
        Command::Report(a) => run::report(&a.report, &a.out, a.max_lag, !a.no_plots),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
