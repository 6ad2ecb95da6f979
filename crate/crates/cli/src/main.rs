//! `accessband` — simulate, ingest, fit, forecast and report on access logs.
//!
//! Exit codes: 0 success, 2 usage or IO failure, 3 every requested fit failed,
//! 4 a requested model is missing.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use accessband::{BandMode, Granularity};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "accessband", version, about = "Forecast-driven access control for data stores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Append access records from a CSV or JSONL file to the store.
    Ingest(IngestArgs),
    /// Fit per-user trends and access bands from the stored records.
    Fit(FitArgs),
    /// Band, extrapolate and judge fitted users; writes the report CSV.
    Forecast(ForecastArgs),
    /// Rank users by the severity of their latest decisions.
    Report(ReportArgs),
    /// Write a synthetic access log.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Selection {
    /// A single user id.
    #[arg(long)]
    user: Option<String>,
    /// Every user.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    store: PathBuf,
    #[command(flatten)]
    select: Selection,
    /// daily, monthly, half-yearly or annual [default: annual]
    #[arg(long)]
    granularity: Option<Granularity>,
    /// Maximum number of changepoints [default: 25]
    #[arg(long)]
    changepoints: Option<usize>,
    /// Leading fraction of the history that may hold changepoints [default: 0.8]
    #[arg(long)]
    cp_range: Option<f64>,
    /// Ridge strength on rate changes [default: 0.01]
    #[arg(long)]
    lambda: Option<f64>,
    /// Residual shift [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Band sensitivity [default: 2]
    #[arg(long)]
    varsigma: Option<f64>,
    /// literal or mu_plus [default: literal]
    #[arg(long, value_parser = parse_band_mode)]
    band_mode: Option<BandMode>,
    /// Only periods up to and including this date are used for training.
    #[arg(long)]
    train_until: Option<NaiveDate>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[arg(long)]
    store: PathBuf,
    #[command(flatten)]
    select: Selection,
    /// Periods to extrapolate past the training window [default: 1]
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Suspects to print.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    users: usize,
    #[arg(long, default_value = "2014-01-01")]
    from: NaiveDate,
    #[arg(long, default_value = "2018-12-31")]
    to: NaiveDate,
    #[arg(long, default_value = "annual")]
    granularity: Granularity,
    /// Normal users stay strictly below this many minutes per period.
    #[arg(long, default_value_t = 80.0)]
    cap: f64,
    #[arg(long)]
    leaker: Option<String>,
    #[arg(long, default_value = "2018-01-01")]
    leak_start: NaiveDate,
    #[arg(long, default_value_t = 15.0)]
    leak_slope: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_band_mode(s: &str) -> Result<BandMode, String> {
    match s {
        "literal" => Ok(BandMode::Literal),
        "mu_plus" | "mu-plus" => Ok(BandMode::MuPlus),
        _ => Err(format!("unknown band mode {s:?} (expected literal or mu_plus)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Fit(a) => commands::fit(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Report(a) => commands::report(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
