//! Command-line driver for the ad-view regression pipeline.
//!
//! Subcommands: `explore`, `train`, `compare`, `predict`, `generate`. Exit
//! codes are 0 on success, 2 for input errors, 3 for schema errors, 4 when
//! some prediction rows failed, 5 for unreadable model bundles, and 1 when a
//! single-model training run fails.

use std::path::PathBuf;
use std::process::ExitCode;

use adview_core::dataset::DatasetError;
use adview_core::features::FeatureError;
use adview_core::models::{BundleError, ModelKind};
use adview_core::preprocess::PreprocessError;
use adview_core::analysis::AnalysisError;
use adview_core::testkit::{SyntheticKind, SyntheticSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod settings;

pub use commands::{cmd_compare, cmd_explore, cmd_generate, cmd_predict, cmd_train};
pub use settings::{RunConfig, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{failed} of {total} rows could not be predicted")]
    PartialPrediction { failed: usize, total: usize },
    #[error("model bundle: {0}")]
    Bundle(#[from] BundleError),
    #[error("training failed: {0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Training(_) => 1,
            CliError::Input(_) => 2,
            CliError::Schema(_) => 3,
            CliError::PartialPrediction { .. } => 4,
            CliError::Bundle(_) => 5,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        if e.is_schema() {
            CliError::Schema(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::UndeclaredColumn(_)
            | FeatureError::MissingTarget(_)
            | FeatureError::MissingEncoder(_) => CliError::Schema(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "adview", version, about = "Train and compare regressors for video ad-view counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summarize a data file and write histograms and a correlation matrix.
    Explore {
        #[command(flatten)]
        common: CommonArgs,
        /// Histogram bin count.
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Train one model and save it as a bundle.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Model kind to train.
        #[arg(long, value_enum)]
        model: Option<KindArg>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Train all five models and write an RMSE report plus bundles.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        /// Record wall-clock training time in the report (breaks byte-identical reruns).
        #[arg(long)]
        timings: bool,
    },
    /// Predict with a saved bundle.
    Predict {
        /// Model bundle written by `train` or `compare`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic data file in the nine-column layout.
    Generate {
        #[arg(long, value_enum, default_value = "tree-structured")]
        kind: SyntheticArg,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, default_value_t = settings::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        noise: f64,
        #[arg(long, default_value_t = 4)]
        d_numeric: usize,
        #[arg(long)]
        no_categorical: bool,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Input CSV file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON schema file; the built-in nine-column schema when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Name of the target column.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of rows used for training.
    #[arg(long)]
    pub split: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for forest training.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    /// Training epochs (network in `compare`, the selected model in `train`).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Step size (network in `compare`, the selected model in `train`).
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub svr_epochs: Option<usize>,
    #[arg(long)]
    pub svr_learning_rate: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub m_try: Option<usize>,
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Hidden layer widths, comma separated; empty for none.
    #[arg(long, value_parser = settings::parse_hidden)]
    pub hidden: Option<std::vec::Vec<usize>>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Linear,
    Svr,
    Tree,
    Forest,
    Ann,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Linear => ModelKind::Linear,
            KindArg::Svr => ModelKind::Svr,
            KindArg::Tree => ModelKind::Tree,
            KindArg::Forest => ModelKind::Forest,
            KindArg::Ann => ModelKind::Ann,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SyntheticArg {
    Linear,
    TreeStructured,
    NoisyMixed,
}

impl From<SyntheticArg> for SyntheticKind {
    fn from(k: SyntheticArg) -> Self {
        match k {
            SyntheticArg::Linear => SyntheticKind::Linear,
            SyntheticArg::TreeStructured => SyntheticKind::TreeStructured,
            SyntheticArg::NoisyMixed => SyntheticKind::NoisyMixed,
        }
    }
}

fn flag_settings(common: &CommonArgs, hyper: Option<&HyperArgs>) -> Settings {
    let mut s = Settings {
        data: common.data.clone(),
        schema: common.schema.clone(),
        target: common.target.clone(),
        seed: common.seed,
        split: common.split,
        out: common.out.clone(),
        threads: common.threads,
        ..Settings::default()
    };
    if let Some(h) = hyper {
        s.epochs = h.epochs;
        s.learning_rate = h.learning_rate;
        s.svr_epochs = h.svr_epochs;
        s.svr_learning_rate = h.svr_learning_rate;
        s.epsilon = h.epsilon;
        s.c = h.c;
        s.n_trees = h.n_trees;
        s.max_depth = h.max_depth;
        s.min_samples_leaf = h.min_samples_leaf;
        s.m_try = h.m_try;
        s.bootstrap = h.no_bootstrap.then_some(false);
        s.hidden = h.hidden.clone();
        s.batch_size = h.batch_size;
    }
    s
}

fn resolve(flags: Settings, config: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    let file = match config {
        Some(path) => Settings::from_config_file(path)?,
        None => Settings::default(),
    };
    RunConfig::resolve(flags.overlay(file))
}

/// Runs `f` inside a dedicated rayon pool of `threads` workers, or on the
/// global pool when `None`.
pub fn with_threads<T>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError>
where
    T: Send,
{
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
        None => f(),
    }
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Explore { common, bins } => {
            let mut flags = flag_settings(&common, None);
            flags.bins = bins;
            let config = resolve(flags, common.config.as_ref())?;
            let outcome = cmd_explore(&config)?;
            println!(
                "{} usable rows ({} dropped); wrote {} files to {}",
                outcome.usable_rows,
                outcome.dropped_rows,
                outcome.files.len(),
                config.out_dir.display()
            );
        }
        Command::Train {
            common,
            model,
            hyper,
        } => {
            let mut flags = flag_settings(&common, Some(&hyper));
            flags.model = model.map(ModelKind::from);
            let config = resolve(flags, common.config.as_ref())?;
            let outcome = with_threads(config.threads, || cmd_train(&config))?;
            println!("model: {}", outcome.kind.display_name());
            println!("train RMSE: {}", outcome.train_rmse);
            println!("test RMSE: {}", outcome.test_rmse);
            println!("bundle: {}", outcome.bundle_path.display());
        }
        Command::Compare {
            common,
            hyper,
            timings,
        } => {
            let mut flags = flag_settings(&common, Some(&hyper));
            flags.timings = timings.then_some(true);
            let config = resolve(flags, common.config.as_ref())?;
            let outcome = with_threads(config.threads, || cmd_compare(&config))?;
            print!("{}", outcome.comparison.report.render_text());
        }
        Command::Predict { model, data, out } => {
            let predictions = cmd_predict(&model, &data, out.as_deref())?;
            let failed = predictions.n_failed();
            if failed > 0 {
                return Err(CliError::PartialPrediction {
                    failed,
                    total: predictions.rows.len(),
                });
            }
        }
        Command::Generate {
            kind,
            rows,
            seed,
            noise,
            d_numeric,
            no_categorical,
            out,
        } => {
            let spec = SyntheticSpec {
                n_rows: rows,
                kind: kind.into(),
                noise_sd: noise,
                seed,
                d_numeric,
                include_categorical: !no_categorical,
            };
            cmd_generate(&spec, out.as_deref())?;
        }
    }
    Ok(())
}

/// Parses arguments, runs, and maps the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adview: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
