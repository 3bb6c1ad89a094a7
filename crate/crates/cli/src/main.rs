//! `windcast`: batch driver for decomposition-based wind-speed forecasting.
//!
//! Subcommands: `synth`, `decompose`, `train`, `forecast`, `evaluate`.
//! Exit codes: 0 success, 2 input/validation failure, 3 numerical failure.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use windcast_core::nets::NetError;
use windcast_core::pipeline::{PipelineConfig, PipelineError, StageSource};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::Stage {
                source: StageSource::Net(NetError::NonFiniteLoss { .. }),
                ..
            } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<windcast_core::series::SeriesError> for CliError {
    fn from(e: windcast_core::series::SeriesError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<windcast_core::emd::EmdError> for CliError {
    fn from(e: windcast_core::emd::EmdError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<windcast_core::stats::StatsError> for CliError {
    fn from(e: windcast_core::stats::StatsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<windcast_core::metrics::MetricsError> for CliError {
    fn from(e: windcast_core::metrics::MetricsError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "windcast",
    version,
    about = "Decomposition-driven short-term wind-speed forecasting"
)]
struct Cli {
    /// Pipeline configuration JSON (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config seed and the decomposition seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic wind-speed series CSV from a generator spec.
    Synth {
        /// Generator spec JSON: {seed, length, ar_coeffs, noise_std,
        /// diurnal_amplitude, offset, trend_amplitude?}.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Decompose a series, report lag-grouped component profiles.
    Decompose {
        /// Input series CSV (`timestamp,ws`).
        #[arg(long, conflicts_with = "synth")]
        input: Option<PathBuf>,
        /// Generator spec JSON used instead of an input file.
        #[arg(long)]
        synth: Option<PathBuf>,
    },
    /// Fit the full pipeline and write the model artifact plus loss curves.
    Train {
        #[arg(long, conflicts_with = "synth")]
        input: Option<PathBuf>,
        #[arg(long)]
        synth: Option<PathBuf>,
    },
    /// Forecast from a trained model over a history series.
    Forecast {
        /// Trained model artifact (JSON).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "synth")]
        input: Option<PathBuf>,
        #[arg(long)]
        synth: Option<PathBuf>,
        /// Horizon steps (default: the model horizon).
        #[arg(long)]
        horizon: Option<usize>,
        /// Roll through the model's held-out test span instead of issuing
        /// a single forecast from the end of the history.
        #[arg(long)]
        walk_test: bool,
        /// Clamp negative forecasts to zero.
        #[arg(long)]
        clamp_zero: bool,
    },
    /// Score forecasts against actuals: per-season, per-horizon metrics,
    /// persistence baseline, mean ranks, and the terrain deviation.
    Evaluate {
        /// Forecast CSV written by `windcast forecast`.
        #[arg(long, conflicts_with = "manifest")]
        forecasts: Option<PathBuf>,
        /// Actuals series CSV.
        #[arg(long, conflicts_with = "manifest")]
        actuals: Option<PathBuf>,
        /// Station label for single-pair evaluation.
        #[arg(long, default_value = "station")]
        station: String,
        /// Terrain label (`plain` or `complex`) for single-pair evaluation.
        #[arg(long, default_value = "plain")]
        terrain: String,
        /// JSON list of {station, terrain, forecasts, actuals} entries.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Comma-separated horizons to score (default: all columns).
        #[arg(long)]
        horizons: Option<String>,
    },
}

fn init_thread_pool() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("WINDCAST_THREADS") {
        let threads: usize = raw.parse().map_err(|_| {
            CliError::Input(format!("WINDCAST_THREADS must be a positive integer, got `{raw}`"))
        })?;
        if threads == 0 {
            return Err(CliError::Input(
                "WINDCAST_THREADS must be a positive integer".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("failed to read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("bad config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.eemd.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_thread_pool()?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", cli.out.display())))?;
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Synth { spec } => commands::synth(spec, cli.seed, &cli.out),
        Command::Decompose { input, synth } => {
            commands::decompose(input.as_deref(), synth.as_deref(), &config, cli.seed, &cli.out)
        }
        Command::Train { input, synth } => {
            commands::train(input.as_deref(), synth.as_deref(), &config, cli.seed, &cli.out)
        }
        Command::Forecast {
            model,
            input,
            synth,
            horizon,
            walk_test,
            clamp_zero,
        } => commands::forecast(
            model,
            input.as_deref(),
            synth.as_deref(),
            cli.seed,
            *horizon,
            *walk_test,
            *clamp_zero,
            &cli.out,
        ),
        Command::Evaluate {
            forecasts,
            actuals,
            station,
            terrain,
            manifest,
            horizons,
        } => commands::evaluate(
            forecasts.as_deref(),
            actuals.as_deref(),
            station,
            terrain,
            manifest.as_deref(),
            horizons.as_deref(),
            &cli.out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
