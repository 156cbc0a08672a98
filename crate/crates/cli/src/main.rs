//! `stinla`: clean detector exports, fit the spatio-temporal count model,
//! score predictions and simulate data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "stinla", version, about = "Spatio-temporal traffic count modelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a raw detector export into hourly per-site counts.
    Clean(CleanArgs),
    /// Mask the prediction range, fit the model and write fitted values.
    Fit(FitArgs),
    /// Extract a date range from a fitted table.
    Predict(PredictArgs),
    /// Overall MPE of predictions against observed counts.
    Evaluate(ScoreArgs),
    /// Prior-mean baseline and its comparison with model predictions.
    Baseline(BaselineArgs),
    /// Simulate a network and counts from the model.
    Simulate(SimulateArgs),
    /// MPE tables by site, day, time and day x time.
    Report(ScoreArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CleanArgs {
    /// Raw export with columns Date,Time,Site,Detector,Count.
    #[arg(long)]
    data: PathBuf,
    /// Detectors to keep, `site: d1 d2` per line; all detectors when absent.
    #[arg(long)]
    keep: Option<PathBuf>,
    /// weekday, weekend or all.
    #[arg(long)]
    weekpart: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Hourly counts (Date,TimeBin,ID,Sum).
    #[arg(long)]
    data: PathBuf,
    /// Edge-list graph file.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    weekpart: Option<String>,
    /// First masked date; defaults to six days before the last date.
    #[arg(long)]
    predict_from: Option<String>,
    /// Last masked date; defaults to the last date.
    #[arg(long)]
    predict_to: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// A fitted table written by `fit`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    predict_from: Option<String>,
    #[arg(long)]
    predict_to: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Observed counts.
    #[arg(long)]
    data: PathBuf,
    /// Predictions as written by `fit` or `predict`.
    #[arg(long)]
    predictions: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// Observed counts, history included.
    #[arg(long)]
    data: PathBuf,
    /// Model predictions to compare against.
    #[arg(long)]
    predictions: PathBuf,
    /// Target range; defaults to the dates covered by the predictions.
    #[arg(long)]
    predict_from: Option<String>,
    #[arg(long)]
    predict_to: Option<String>,
    #[arg(long)]
    history_weeks: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Clean(a) => commands::clean(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Baseline(a) => commands::baseline(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stinla: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
