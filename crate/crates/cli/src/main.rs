//! `demandcast`: synthesize smart-meter data, train LSTM demand forecasters,
//! produce multi-step forecasts, run the evaluation experiments, verify
//! gradients, and plot results.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod config;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use demandcast_core::data::DataError;
use demandcast_core::eval::EvalError;
use demandcast_core::features::FeatureError;
use demandcast_core::lstm::LstmError;
use demandcast_core::training::TrainError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError::Numeric(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<LstmError> for CliError {
    fn from(e: LstmError) -> Self {
        match e {
            LstmError::BadModelFile(_) | LstmError::Json(_) => CliError::Data(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Train(TrainError::NonFiniteLoss { .. }) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "demandcast",
    version,
    about = "LSTM short/medium-term energy demand forecasting pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Model/training options shared by the subcommands that fit or evaluate
/// models. Precedence: flags > --config file > DEMANDCAST_SEED > defaults.
#[derive(Args, Clone, Debug, Default)]
struct ModelFlags {
    /// JSON config file with the same field names as these flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for weight init, shuffling, and synthetic data
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden state size
    #[arg(long)]
    hidden: Option<usize>,
    /// Training window length in 30-minute steps
    #[arg(long)]
    window: Option<usize>,
    /// Feature set: all, consumption+temperature, consumption+time
    #[arg(long)]
    features: Option<String>,
    /// Time feature encoding: concat (default) or sequential
    #[arg(long)]
    time_encoding: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Global gradient-norm clip
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Training-time noise std on the consumption input channel
    #[arg(long)]
    input_noise: Option<f64>,
    /// Loss over window steps: every (default) or final
    #[arg(long)]
    loss_steps: Option<String>,
    /// Chronological split as train,val,test fractions (e.g. 0.7,0.1,0.2)
    #[arg(long)]
    split: Option<String>,
    /// Cluster id to model
    #[arg(long)]
    cluster: Option<u32>,
    /// Restrict to one calendar month (YYYY-MM)
    #[arg(long)]
    month: Option<String>,
    /// Forecast horizon in 30-minute steps
    #[arg(long)]
    horizon: Option<usize>,
}

impl ModelFlags {
    fn resolve(&self) -> Result<config::RunConfig, CliError> {
        let mut partial = config::PartialConfig {
            seed: self.seed,
            hidden_size: self.hidden,
            window_len: self.window,
            features: self.features.clone(),
            time_encoding: self.time_encoding.clone(),
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            grad_clip_norm: self.grad_clip,
            batch: self.batch,
            input_noise_std: self.input_noise,
            loss_steps: self.loss_steps.clone(),
            cluster: self.cluster,
            month: self.month.clone(),
            horizon: self.horizon,
            split: None,
        };
        if let Some(raw) = &self.split {
            partial.split = Some(config::parse_split(raw)?);
        }
        config::RunConfig::resolve(self.config.as_deref(), partial)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic smart-meter dataset directory
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 16)]
        consumers: usize,
        #[arg(long, default_value_t = 365)]
        days: usize,
        /// First day of the dataset (YYYY-MM-DD)
        #[arg(long)]
        start_date: Option<String>,
        /// Split the meter readings across this many CSV files
        #[arg(long, default_value_t = 1)]
        files: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a forecaster on one cluster profile and save it as JSON
    Train {
        #[command(flatten)]
        flags: ModelFlags,
        /// Data directory (from `synth` or with the same layout)
        #[arg(long)]
        data: PathBuf,
        /// Output model JSON path
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-epoch loss CSV here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Closed-loop forecast with a trained model, scored against actuals
    Forecast {
        #[command(flatten)]
        flags: ModelFlags,
        /// Trained model JSON (from `train`)
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output forecast CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-month 3-day-ahead experiment across feature sets
    EvalMonthly {
        #[command(flatten)]
        flags: ModelFlags,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated feature sets to compare
        #[arg(long, default_value = "all,consumption+temperature,consumption+time")]
        feature_sets: String,
        /// Output report CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// 3-day-ahead experiment on the remaining clusters for two months
    EvalClusters {
        #[command(flatten)]
        flags: ModelFlags,
        #[arg(long)]
        data: PathBuf,
        /// Two months as YYYY-MM,YYYY-MM
        #[arg(long)]
        months: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full-span training and a 15-day-ahead forecast
    EvalAnnual {
        #[command(flatten)]
        flags: ModelFlags,
        #[arg(long)]
        data: PathBuf,
        /// Output forecast CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against central finite differences
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Render a forecast CSV as an SVG chart
    Plot {
        /// Forecast CSV (from `forecast` or `eval-annual`)
        #[arg(long)]
        input: PathBuf,
        /// Output SVG path
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };

    let result = match cli.command {
        Command::Synth {
            seed,
            consumers,
            days,
            start_date,
            files,
            out,
        } => commands::synth(seed, consumers, days, start_date.as_deref(), files, &out),
        Command::Train {
            flags,
            data,
            out,
            report,
        } => flags
            .resolve()
            .and_then(|cfg| commands::train(&cfg, &data, &out, report.as_deref())),
        Command::Forecast {
            flags,
            model,
            data,
            out,
        } => flags
            .resolve()
            .and_then(|cfg| commands::forecast(&cfg, &model, &data, &out)),
        Command::EvalMonthly {
            flags,
            data,
            feature_sets,
            out,
        } => flags
            .resolve()
            .and_then(|cfg| commands::eval_monthly(&cfg, &data, &feature_sets, &out)),
        Command::EvalClusters {
            flags,
            data,
            months,
            out,
        } => flags
            .resolve()
            .and_then(|cfg| commands::eval_clusters(&cfg, &data, &months, &out)),
        Command::EvalAnnual { flags, data, out } => flags
            .resolve()
            .and_then(|cfg| commands::eval_annual(&cfg, &data, &out)),
        Command::Gradcheck { seed, instances } => commands::gradcheck(seed, instances),
        Command::Plot { input, out } => commands::plot_command(&input, &out),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
