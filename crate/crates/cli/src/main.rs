//! `farecombo`: simulate a fare marketplace, compare models, and replay the
//! daily retraining pipeline. Every command writes CSV/JSON reports plus the
//! fully-resolved configuration it ran with.

mod commands;
mod config;
mod error;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use farecombo::features::FeatureMode;

#[derive(Debug, Parser)]
#[command(name = "farecombo", version, about = "Predictive construction of cheap combination itineraries")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment config; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed applied to the simulator, the models and the pipeline.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a world and its per-day ground truth.
    Simulate,
    /// Train every model on a window and evaluate on the following day.
    EvalModels(EvalArgs),
    /// Replay the daily train, validate, extract and serve loop.
    Pipeline(PipelineArgs),
    /// Train skip-gram airport embeddings from search traces.
    Embed(DataArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding simulated data; defaults to `--out`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Training days before the evaluation day.
    #[arg(long)]
    window: Option<usize>,
    /// Also report each model's operating point at this quote-request rate.
    #[arg(long)]
    budget: Option<f64>,
    /// Write every trained model as JSON under `models/`.
    #[arg(long)]
    export_models: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Quote-request budget as a fraction of instances.
    #[arg(long)]
    budget: Option<f64>,
    /// Training window in days.
    #[arg(long)]
    window: Option<usize>,
    /// Airport representation for the served model.
    #[arg(long, value_enum)]
    feature_mode: Option<ModeArg>,
    /// Write stability.csv.
    #[arg(long)]
    stability: bool,
    /// Write staleness.csv comparing one-off and daily retraining.
    #[arg(long)]
    staleness: bool,
    /// Write window_sweep.csv.
    #[arg(long)]
    window_sweep: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Onehot,
    Trace,
    Cotrained,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Onehot => FeatureMode::OneHot,
            ModeArg::Trace => FeatureMode::TraceEmbed,
            ModeArg::Cotrained => FeatureMode::CoTrainedEmbed,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate => commands::simulate(&cli.common),
        Command::EvalModels(args) => commands::eval_models(&cli.common, args),
        Command::Pipeline(args) => commands::pipeline(&cli.common, args),
        Command::Embed(args) => commands::embed(&cli.common, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
