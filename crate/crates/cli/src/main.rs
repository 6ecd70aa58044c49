mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Mirror soiling: model fitting, reflectance prediction and daily-loss
/// simulation.
#[derive(Debug, Parser)]
#[command(name = "soiling", version, about)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit model parameters to reflectance differences.
    Fit(FitArgs),
    /// Predict reflectance trajectories with 2σ bands.
    Predict(PredictArgs),
    /// Simulate the distribution of daily reflectance losses.
    SimulateDaily(SimulateArgs),
    /// Precompute the γ(D) table for a site and store it in the cache.
    MieTable(MieTableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    SemiPhysical,
    ConstantMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimulationMode {
    Scenarios,
    SampleDays,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    /// Site configuration JSON.
    #[arg(long)]
    site_config: PathBuf,

    /// Weather CSV, one per campaign.
    #[arg(long, required = true)]
    weather: Vec<PathBuf>,

    /// Reflectance CSV, one per campaign and in the same order as --weather.
    #[arg(long)]
    reflectance: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    model: ModelArg,

    #[command(flatten)]
    campaigns: CampaignArgs,

    /// Comma-separated zero-based campaign indices used for fitting (default: all).
    #[arg(long, value_delimiter = ',')]
    train_campaigns: Vec<usize>,

    /// Only use measurements up to a time in one campaign, as INDEX=TIMESTAMP.
    #[arg(long)]
    train_until: Vec<String>,

    /// `horizontal`, `all`, or a comma-separated list of mirror ids.
    #[arg(long, default_value = "horizontal")]
    mirrors: String,

    /// Starting hrz0 (semi-physical) or μ̃ (constant-mean).
    #[arg(long)]
    initial: Option<f64>,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fit result JSON.
    #[arg(long)]
    fit: PathBuf,

    #[command(flatten)]
    campaigns: CampaignArgs,

    /// Mirrors to predict (same syntax as for fitting).
    #[arg(long, default_value = "all")]
    mirrors: String,

    /// Start from a clean mirror at this timestamp instead of the first measurement.
    #[arg(long)]
    from_clean: Option<String>,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Fit result JSON.
    #[arg(long)]
    fit: PathBuf,

    #[command(flatten)]
    campaigns: CampaignArgs,

    #[arg(long, value_enum, default_value = "scenarios")]
    mode: SimulationMode,

    /// Comma-separated loading percentiles for scenario mode.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 50.0, 95.0, 100.0])]
    percentiles: Vec<f64>,

    /// Monte Carlo samples per scenario (or in total for sample-days).
    #[arg(long, default_value_t = 10_000)]
    samples: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Mirror tilt used for the daily loadings.
    #[arg(long, default_value_t = 0.0)]
    tilt: f64,

    /// Keep parameters at their point estimates.
    #[arg(long)]
    no_parameter_uncertainty: bool,

    /// Include days with missing intervals.
    #[arg(long)]
    include_partial: bool,

    /// Samples CSV; the summary goes to `<out>.summary.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MieTableArgs {
    #[arg(long)]
    site_config: PathBuf,

    /// Also write the table to this CSV (with a JSON sidecar).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::SimulateDaily(a) => commands::simulate_daily(&a),
        Command::MieTable(a) => commands::mie_table(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
