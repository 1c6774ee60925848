//! Error metric, exploratory statistics and the five-model comparison report.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::features::{FeatureMatrix, TargetVector};
use crate::models::{ModelConfig, ModelKind, Regressor};
use crate::rng::{derive_seed, stream};

pub const DEFAULT_BINS: usize = 30;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("length mismatch: {predicted} predictions for {actual} actual values")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("cannot compute a metric over empty vectors")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("histogram needs at least one bin")]
    ZeroBins,
    #[error("histogram of {0:?} has no finite values")]
    NoFiniteValues(String),
    #[error("correlation needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("train and test feature columns differ")]
    FeatureMismatch,
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64, AnalysisError> {
    if predicted.len() != actual.len() {
        return Err(AnalysisError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut sum = 0.0;
    for (i, (p, a)) in predicted.iter().zip(actual).enumerate() {
        if !p.is_finite() || !a.is_finite() {
            return Err(AnalysisError::NonFinite(i));
        }
        sum += (p - a) * (p - a);
    }
    Ok((sum / predicted.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub column_name: String,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (k, count) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.bin_edges[k], self.bin_edges[k + 1], count);
        }
        out
    }
}

/// Equal-width histogram over the finite entries of `values`.
///
/// Bins are `[lo, hi)` except the last, which also holds its right edge. A zero
/// span is widened by 0.5 on each side. When the span is so narrow relative to
/// its magnitude that neighbouring edges round to the same float, duplicate
/// edges are merged, so fewer than `bins` bins may come back.
pub fn histogram(column_name: &str, values: &[f64], bins: usize) -> Result<Histogram, AnalysisError> {
    if bins == 0 {
        return Err(AnalysisError::ZeroBins);
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let Some(&first) = finite.first() else {
        return Err(AnalysisError::NoFiniteValues(column_name.to_string()));
    };
    let (mut lo, mut hi) = finite
        .iter()
        .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let span = hi - lo;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + span * (k as f64 / bins as f64)).collect();
    edges.push(hi);
    edges.dedup();
    let k = edges.len() - 1;
    let mut counts = vec![0u64; k];
    for v in finite {
        let guess = (((v - lo) / span) * k as f64).floor();
        let mut idx = if guess.is_finite() && guess > 0.0 {
            (guess as usize).min(k - 1)
        } else {
            0
        };
        while idx > 0 && v < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < k && v >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    Ok(Histogram {
        column_name: column_name.to_string(),
        bin_edges: edges,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Array2<f64>,
    /// Columns with zero variance; their rows and columns are all zero.
    pub constant: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[[i, j]])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, name) in self.names.iter().enumerate() {
            out.push_str(name);
            for v in self.values.row(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Pearson correlation over every feature column plus the target.
pub fn correlation_matrix(
    features: &FeatureMatrix,
    target: &TargetVector,
) -> Result<CorrelationMatrix, AnalysisError> {
    let n = features.n_rows();
    if target.values.len() != n {
        return Err(AnalysisError::LengthMismatch {
            predicted: n,
            actual: target.values.len(),
        });
    }
    if n < 2 {
        return Err(AnalysisError::TooFewRows(n));
    }
    let mut columns: Vec<Vec<f64>> = features
        .values
        .columns()
        .into_iter()
        .map(|c| c.to_vec())
        .collect();
    columns.push(target.values.clone());
    let mut names = features.feature_names.clone();
    names.push(target.name.clone());

    let constant: Vec<bool> = columns.iter().map(|c| c.iter().all(|&v| v == c[0])).collect();
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let sum_sq: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>())
        .collect();

    let p = columns.len();
    let mut values = Array2::zeros((p, p));
    for i in 0..p {
        if constant[i] {
            continue;
        }
        values[[i, i]] = 1.0;
        for j in (i + 1)..p {
            if constant[j] {
                continue;
            }
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = (dot / (sum_sq[i] * sum_sq[j]).sqrt()).clamp(-1.0, 1.0);
            values[[i, j]] = r;
            values[[j, i]] = r;
        }
    }
    Ok(CorrelationMatrix {
        names,
        values,
        constant,
    })
}

/// Seed stream for each model kind; kinds without randomness keep the base seed.
pub fn model_seed(seed: u64, kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Linear => seed,
        ModelKind::Svr => derive_seed(seed, stream::SVR),
        ModelKind::Tree => derive_seed(seed, stream::TREE),
        ModelKind::Forest => derive_seed(seed, stream::FOREST),
        ModelKind::Ann => derive_seed(seed, stream::ANN),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub kind: ModelKind,
    pub model_name: String,
    /// Test RMSE, or the failure message if the model could not be trained.
    pub outcome: Result<f64, String>,
    /// Present only when timings were requested.
    pub train_seconds: Option<f64>,
    pub hyperparameter_summary: String,
}

impl ReportRow {
    pub fn rmse(&self) -> Option<f64> {
        self.outcome.as_ref().ok().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset_name: String,
    pub seed: u64,
    pub split_ratio: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub rows: Vec<ReportRow>,
    /// Lowest-RMSE model among the non-neural ones, if any succeeded.
    pub best_ml: Option<ModelKind>,
}

impl EvalReport {
    pub fn row(&self, kind: ModelKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    fn marker(&self, kind: ModelKind) -> &'static str {
        if Some(kind) == self.best_ml {
            "*"
        } else if kind.is_neural() {
            "+"
        } else {
            ""
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Dataset: {}", self.dataset_name);
        let _ = writeln!(
            out,
            "Seed: {}  Split ratio: {}  Train rows: {}  Test rows: {}",
            self.seed, self.split_ratio, self.n_train, self.n_test
        );
        out.push('\n');
        let name_width = self
            .rows
            .iter()
            .map(|r| r.model_name.len())
            .chain(std::iter::once("Model".len()))
            .max()
            .unwrap_or(5);
        let _ = writeln!(
            out,
            "  {:<name_width$}  {:>12}  {:>10}  Hyperparameters",
            "Model", "RMSE", "Train (s)"
        );
        for row in &self.rows {
            let rmse = match &row.outcome {
                Ok(v) => format!("{v:.3}"),
                Err(_) => "ERROR".to_string(),
            };
            let secs = row
                .train_seconds
                .map_or_else(|| "NA".to_string(), |s| format!("{s:.3}"));
            let _ = writeln!(
                out,
                "{:<1} {:<name_width$}  {:>12}  {:>10}  {}",
                self.marker(row.kind),
                row.model_name,
                rmse,
                secs,
                row.hyperparameter_summary
            );
            if let Err(msg) = &row.outcome {
                let _ = writeln!(out, "    error: {msg}");
            }
        }
        out.push('\n');
        match self.best_ml {
            Some(kind) => {
                let _ = writeln!(out, "* minimum-RMSE machine-learning model: {}", kind.display_name());
            }
            None => out.push_str("* no machine-learning model trained successfully\n"),
        }
        out.push_str("+ neural model carried forward alongside it\n");
        out
    }

    pub fn render_tsv(&self) -> String {
        let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
        let mut out = String::from("model\trmse\ttrain_seconds\thyperparameters\n");
        for row in &self.rows {
            let rmse = match &row.outcome {
                Ok(v) => v.to_string(),
                Err(msg) => format!("ERROR: {}", clean(msg)),
            };
            let secs = row
                .train_seconds
                .map_or_else(|| "NA".to_string(), |s| s.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                row.model_name,
                rmse,
                secs,
                clean(&row.hyperparameter_summary)
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub dataset_name: String,
    pub seed: u64,
    pub split_ratio: f64,
    pub record_timings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub report: EvalReport,
    /// Fitted models in report order; `None` where training failed.
    pub models: Vec<Option<Regressor>>,
}

/// Trains each configured model on `train` and scores it on `test`.
///
/// Every stochastic model is reseeded from `options.seed` through its own
/// stream, so the report depends only on the data, configs and seed. A model
/// that fails to train or predicts non-finite values gets an error row.
pub fn compare_models(
    train: (&FeatureMatrix, &TargetVector),
    test: (&FeatureMatrix, &TargetVector),
    configs: &[ModelConfig],
    options: &CompareOptions,
) -> Result<Comparison, AnalysisError> {
    let (x_train, y_train) = train;
    let (x_test, y_test) = test;
    if x_train.feature_names != x_test.feature_names {
        return Err(AnalysisError::FeatureMismatch);
    }
    let mut rows = Vec::with_capacity(configs.len());
    let mut models = Vec::with_capacity(configs.len());
    for config in configs {
        let kind = config.kind();
        let config = config.clone().with_seed(model_seed(options.seed, kind));
        let started = Instant::now();
        let fitted = Regressor::fit(&config, x_train.values.view(), &y_train.values);
        let elapsed = started.elapsed().as_secs_f64();
        let outcome = fitted
            .as_ref()
            .map_err(|e| e.to_string())
            .and_then(|m| score(m, x_test.values.view(), &y_test.values));
        rows.push(ReportRow {
            kind,
            model_name: kind.display_name().to_string(),
            outcome,
            train_seconds: options.record_timings.then_some(elapsed),
            hyperparameter_summary: config.summary(),
        });
        models.push(fitted.ok());
    }
    let best_ml = rows
        .iter()
        .filter(|r| !r.kind.is_neural())
        .filter_map(|r| r.rmse().map(|v| (r.kind, v)))
        .fold(None, |best: Option<(ModelKind, f64)>, (k, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((k, v)),
        })
        .map(|(k, _)| k);
    Ok(Comparison {
        report: EvalReport {
            dataset_name: options.dataset_name.clone(),
            seed: options.seed,
            split_ratio: options.split_ratio,
            n_train: x_train.n_rows(),
            n_test: x_test.n_rows(),
            rows,
            best_ml,
        },
        models,
    })
}

fn score(model: &Regressor, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<f64, String> {
    let predicted = model.predict(x).map_err(|e| e.to_string())?;
    rmse(&predicted, y).map_err(|e| format!("test RMSE undefined: {e}"))
}

/// Default configs for all five kinds, in report order.
pub fn default_configs() -> Vec<ModelConfig> {
    ModelKind::ALL.into_iter().map(ModelConfig::default_for).collect()
}
