//! Run settings: command-line flags layered over a key=value config file
//! layered over built-in defaults.

use std::path::{Path, PathBuf};

use adview_core::analysis::DEFAULT_BINS;
use adview_core::models::{AnnConfig, ForestConfig, ModelConfig, ModelKind, SvrConfig, TreeConfig};

use crate::CliError;

pub const DEFAULT_TARGET: &str = "adview";
pub const DEFAULT_SPLIT: f64 = 0.8;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "adview-out";

/// Every setting a run can take, each optional so layers can be merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub target: Option<String>,
    pub seed: Option<u64>,
    pub split: Option<f64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub model: Option<ModelKind>,
    pub bins: Option<usize>,
    pub timings: Option<bool>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub svr_epochs: Option<usize>,
    pub svr_learning_rate: Option<f64>,
    pub epsilon: Option<f64>,
    pub c: Option<f64>,
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub m_try: Option<usize>,
    pub bootstrap: Option<bool>,
    pub hidden: Option<Vec<usize>>,
    pub batch_size: Option<usize>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Input(format!("config key {key:?}: cannot parse {value:?}")))
}

/// Parses a comma-separated list of layer widths; an empty string means no hidden layers.
pub fn parse_hidden(text: &str) -> Result<Vec<usize>, String> {
    let text = text.trim();
    if text.is_empty() || text == "none" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid hidden layer width {part:?}"))
        })
        .collect()
}

impl Settings {
    /// Reads `key = value` lines. Blank lines and `#` comments are skipped;
    /// keys may use `-` or `_`.
    pub fn from_config_text(text: &str) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Input(format!(
                    "config line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            let key = key.trim().to_ascii_lowercase().replace('-', "_");
            let value = value.trim();
            match key.as_str() {
                "data" => s.data = Some(value.into()),
                "schema" => s.schema = Some(value.into()),
                "target" => s.target = Some(value.to_string()),
                "seed" => s.seed = Some(parse_value(&key, value)?),
                "split" => s.split = Some(parse_value(&key, value)?),
                "out" => s.out = Some(value.into()),
                "threads" => s.threads = Some(parse_value(&key, value)?),
                "model" => s.model = Some(parse_value(&key, value)?),
                "bins" => s.bins = Some(parse_value(&key, value)?),
                "timings" => s.timings = Some(parse_value(&key, value)?),
                "epochs" => s.epochs = Some(parse_value(&key, value)?),
                "learning_rate" => s.learning_rate = Some(parse_value(&key, value)?),
                "svr_epochs" => s.svr_epochs = Some(parse_value(&key, value)?),
                "svr_learning_rate" => s.svr_learning_rate = Some(parse_value(&key, value)?),
                "epsilon" => s.epsilon = Some(parse_value(&key, value)?),
                "c" => s.c = Some(parse_value(&key, value)?),
                "n_trees" => s.n_trees = Some(parse_value(&key, value)?),
                "max_depth" => s.max_depth = Some(parse_value(&key, value)?),
                "min_samples_leaf" => s.min_samples_leaf = Some(parse_value(&key, value)?),
                "m_try" => s.m_try = Some(parse_value(&key, value)?),
                "bootstrap" => s.bootstrap = Some(parse_value(&key, value)?),
                "hidden" => {
                    s.hidden = Some(parse_hidden(value).map_err(|e| {
                        CliError::Input(format!("config key \"hidden\": {e}"))
                    })?)
                }
                "batch_size" => s.batch_size = Some(parse_value(&key, value)?),
                _ => {
                    return Err(CliError::Input(format!(
                        "config line {}: unknown key {key:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(s)
    }

    pub fn from_config_file(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Input(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Settings::from_config_text(&text)
    }

    /// Fields set here win; unset ones fall back to `lower`.
    pub fn overlay(self, lower: Settings) -> Settings {
        Settings {
            data: self.data.or(lower.data),
            schema: self.schema.or(lower.schema),
            target: self.target.or(lower.target),
            seed: self.seed.or(lower.seed),
            split: self.split.or(lower.split),
            out: self.out.or(lower.out),
            threads: self.threads.or(lower.threads),
            model: self.model.or(lower.model),
            bins: self.bins.or(lower.bins),
            timings: self.timings.or(lower.timings),
            epochs: self.epochs.or(lower.epochs),
            learning_rate: self.learning_rate.or(lower.learning_rate),
            svr_epochs: self.svr_epochs.or(lower.svr_epochs),
            svr_learning_rate: self.svr_learning_rate.or(lower.svr_learning_rate),
            epsilon: self.epsilon.or(lower.epsilon),
            c: self.c.or(lower.c),
            n_trees: self.n_trees.or(lower.n_trees),
            max_depth: self.max_depth.or(lower.max_depth),
            min_samples_leaf: self.min_samples_leaf.or(lower.min_samples_leaf),
            m_try: self.m_try.or(lower.m_try),
            bootstrap: self.bootstrap.or(lower.bootstrap),
            hidden: self.hidden.or(lower.hidden),
            batch_size: self.batch_size.or(lower.batch_size),
        }
    }
}

/// Fully resolved configuration for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_path: PathBuf,
    pub schema_path: Option<PathBuf>,
    pub target_name: String,
    pub split_ratio: f64,
    pub seed: u64,
    pub model_kind: Option<ModelKind>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub bins: usize,
    pub record_timings: bool,
    hyper: Settings,
}

impl RunConfig {
    pub fn resolve(settings: Settings) -> Result<RunConfig, CliError> {
        let data_path = settings
            .data
            .clone()
            .ok_or_else(|| CliError::Input("no data file given (use --data)".into()))?;
        let split_ratio = settings.split.unwrap_or(DEFAULT_SPLIT);
        if !(split_ratio > 0.0 && split_ratio < 1.0) {
            return Err(CliError::Input(format!(
                "split ratio must lie strictly between 0 and 1, got {split_ratio}"
            )));
        }
        if settings.threads == Some(0) {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        Ok(RunConfig {
            data_path,
            schema_path: settings.schema.clone(),
            target_name: settings.target.clone().unwrap_or_else(|| DEFAULT_TARGET.into()),
            split_ratio,
            seed: settings.seed.unwrap_or(DEFAULT_SEED),
            model_kind: settings.model,
            out_dir: settings.out.clone().unwrap_or_else(|| DEFAULT_OUT.into()),
            threads: settings.threads,
            bins: settings.bins.unwrap_or(DEFAULT_BINS),
            record_timings: settings.timings.unwrap_or(false),
            hyper: settings,
        })
    }

    fn tree_config(&self) -> TreeConfig {
        let d = TreeConfig::default();
        TreeConfig {
            max_depth: self.hyper.max_depth.unwrap_or(d.max_depth),
            min_samples_leaf: self.hyper.min_samples_leaf.unwrap_or(d.min_samples_leaf),
        }
    }

    fn forest_config(&self) -> ForestConfig {
        let d = ForestConfig::default();
        ForestConfig {
            n_trees: self.hyper.n_trees.unwrap_or(d.n_trees),
            m_try: self.hyper.m_try.or(d.m_try),
            bootstrap: self.hyper.bootstrap.unwrap_or(d.bootstrap),
            max_depth: self.hyper.max_depth.unwrap_or(d.max_depth),
            min_samples_leaf: self.hyper.min_samples_leaf.unwrap_or(d.min_samples_leaf),
            seed: d.seed,
        }
    }

    fn svr_config(&self, epochs: Option<usize>, learning_rate: Option<f64>) -> SvrConfig {
        let d = SvrConfig::default();
        SvrConfig {
            epsilon: self.hyper.epsilon.unwrap_or(d.epsilon),
            c: self.hyper.c.unwrap_or(d.c),
            learning_rate: learning_rate.unwrap_or(d.learning_rate),
            epochs: epochs.unwrap_or(d.epochs),
            seed: d.seed,
        }
    }

    fn ann_config(&self) -> AnnConfig {
        let d = AnnConfig::default();
        AnnConfig {
            hidden_sizes: self.hyper.hidden.clone().unwrap_or(d.hidden_sizes),
            learning_rate: self.hyper.learning_rate.unwrap_or(d.learning_rate),
            epochs: self.hyper.epochs.unwrap_or(d.epochs),
            batch_size: self.hyper.batch_size.unwrap_or(d.batch_size),
            seed: d.seed,
        }
    }

    /// Config for a single-model run, where `epochs` and `learning_rate`
    /// address whichever iterative model is selected.
    pub fn single_config(&self, kind: ModelKind) -> ModelConfig {
        match kind {
            ModelKind::Linear => ModelConfig::Linear,
            ModelKind::Svr => ModelConfig::Svr(self.svr_config(
                self.hyper.epochs.or(self.hyper.svr_epochs),
                self.hyper.learning_rate.or(self.hyper.svr_learning_rate),
            )),
            ModelKind::Tree => ModelConfig::Tree(self.tree_config()),
            ModelKind::Forest => ModelConfig::Forest(self.forest_config()),
            ModelKind::Ann => ModelConfig::Ann(self.ann_config()),
        }
    }

    /// Configs for all five models. Here `epochs` and `learning_rate` belong
    /// to the network and the SVR takes the `svr_` variants.
    pub fn comparison_configs(&self) -> Vec<ModelConfig> {
        ModelKind::ALL
            .into_iter()
            .map(|kind| match kind {
                ModelKind::Svr => ModelConfig::Svr(
                    self.svr_config(self.hyper.svr_epochs, self.hyper.svr_learning_rate),
                ),
                other => self.single_config(other),
            })
            .collect()
    }
}
