//! Five regressors behind one fit/predict contract, plus bundle persistence.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use thiserror::Error;

pub mod ann;
pub mod bundle;
pub mod forest;
pub mod linear;
pub mod svr;
pub mod tree;

pub use ann::{fit_ann, AnnConfig, AnnModel};
pub use bundle::{load_model, save_model, BundleError, ModelBundle};
pub use forest::{fit_forest, ForestConfig, ForestModel};
pub use linear::{fit_linear, LinearModel};
pub use svr::{fit_svr, SvrConfig, SvrModel};
pub use tree::{fit_tree, TreeConfig, TreeModel, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("cannot fit on empty data")]
    EmptyData,
    #[error("target has {found} values for {expected} rows")]
    TargetLength { expected: usize, found: usize },
    #[error("model expects {expected} features, got {found}")]
    FeatureCount { expected: usize, found: usize },
    #[error("model has not been fitted")]
    NotFitted,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}{}", batch.map(|b| format!(", batch {b}")).unwrap_or_default())]
    Diverged { epoch: usize, batch: Option<usize> },
}

pub(crate) fn check_training_data(x: &ArrayView2<'_, f64>, y: &[f64]) -> Result<(), ModelError> {
    if x.nrows() == 0 {
        return Err(ModelError::EmptyData);
    }
    if y.len() != x.nrows() {
        return Err(ModelError::TargetLength {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_features(expected: usize, x: &ArrayView2<'_, f64>) -> Result<(), ModelError> {
    if x.ncols() != expected {
        return Err(ModelError::FeatureCount {
            expected,
            found: x.ncols(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Linear,
    Svr,
    Tree,
    Forest,
    Ann,
}

impl ModelKind {
    /// Comparison-report order.
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Linear,
        ModelKind::Svr,
        ModelKind::Tree,
        ModelKind::Forest,
        ModelKind::Ann,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Svr => "svr",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Ann => "ann",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Linear => "Linear Regression",
            ModelKind::Svr => "Support Vector Machine",
            ModelKind::Tree => "Decision Tree",
            ModelKind::Forest => "Random Forest",
            ModelKind::Ann => "Artificial Neural Network",
        }
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            ModelKind::Linear => "LR",
            ModelKind::Svr => "SVM",
            ModelKind::Tree => "DT",
            ModelKind::Forest => "RF",
            ModelKind::Ann => "ANN",
        }
    }

    pub fn is_neural(self) -> bool {
        self == ModelKind::Ann
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown model kind {0:?} (expected linear, svr, tree, forest or ann)")]
pub struct UnknownKind(pub String);

impl FromStr for ModelKind {
    type Err = UnknownKind;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Linear,
    Svr(SvrConfig),
    Tree(TreeConfig),
    Forest(ForestConfig),
    Ann(AnnConfig),
}

impl ModelConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Linear => ModelConfig::Linear,
            ModelKind::Svr => ModelConfig::Svr(SvrConfig::default()),
            ModelKind::Tree => ModelConfig::Tree(TreeConfig::default()),
            ModelKind::Forest => ModelConfig::Forest(ForestConfig::default()),
            ModelKind::Ann => ModelConfig::Ann(AnnConfig::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Linear => ModelKind::Linear,
            ModelConfig::Svr(_) => ModelKind::Svr,
            ModelConfig::Tree(_) => ModelKind::Tree,
            ModelConfig::Forest(_) => ModelKind::Forest,
            ModelConfig::Ann(_) => ModelKind::Ann,
        }
    }

    /// Replaces any seed carried by the config.
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            ModelConfig::Svr(c) => ModelConfig::Svr(SvrConfig { seed, ..c }),
            ModelConfig::Forest(c) => ModelConfig::Forest(ForestConfig { seed, ..c }),
            ModelConfig::Ann(c) => ModelConfig::Ann(AnnConfig { seed, ..c }),
            other => other,
        }
    }

    pub fn summary(&self) -> String {
        match self {
            ModelConfig::Linear => "normal equations".to_string(),
            ModelConfig::Svr(c) => c.summary(),
            ModelConfig::Tree(c) => c.summary(),
            ModelConfig::Forest(c) => c.summary(),
            ModelConfig::Ann(c) => c.summary(),
        }
    }
}

/// A fitted model of one of the five kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Regressor {
    Linear(LinearModel),
    Svr(SvrModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Ann(AnnModel),
}

impl Regressor {
    pub fn fit(config: &ModelConfig, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<Self, ModelError> {
        Ok(match config {
            ModelConfig::Linear => Regressor::Linear(fit_linear(x, y)?),
            ModelConfig::Svr(c) => Regressor::Svr(fit_svr(x, y, c)?),
            ModelConfig::Tree(c) => Regressor::Tree(fit_tree(x, y, c)?),
            ModelConfig::Forest(c) => Regressor::Forest(fit_forest(x, y, c)?),
            ModelConfig::Ann(c) => Regressor::Ann(fit_ann(x, y, c)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Regressor::Linear(_) => ModelKind::Linear,
            Regressor::Svr(_) => ModelKind::Svr,
            Regressor::Tree(_) => ModelKind::Tree,
            Regressor::Forest(_) => ModelKind::Forest,
            Regressor::Ann(_) => ModelKind::Ann,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Regressor::Linear(m) => m.weights.len(),
            Regressor::Svr(m) => m.weights.len(),
            Regressor::Tree(m) => m.n_features,
            Regressor::Forest(m) => m.n_features,
            Regressor::Ann(m) => m.layer_sizes[0],
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ModelError> {
        check_features(self.n_features(), &x)?;
        Ok(match self {
            Regressor::Linear(m) => m.predict(x),
            Regressor::Svr(m) => m.predict(x),
            Regressor::Tree(m) => m.predict(x),
            Regressor::Forest(m) => m.predict(x),
            Regressor::Ann(m) => m.predict(x),
        })
    }
}

/// A configured model that may or may not have been fitted yet.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub config: ModelConfig,
    fitted: Option<Regressor>,
}

impl Estimator {
    pub fn new(config: ModelConfig) -> Self {
        Estimator {
            config,
            fitted: None,
        }
    }

    pub fn fit(&mut self, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<&Regressor, ModelError> {
        let model = Regressor::fit(&self.config, x, y)?;
        Ok(self.fitted.insert(model))
    }

    pub fn fitted(&self) -> Option<&Regressor> {
        self.fitted.as_ref()
    }

    pub fn into_fitted(self) -> Option<Regressor> {
        self.fitted
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ModelError> {
        self.fitted
            .as_ref()
            .ok_or(ModelError::NotFitted)?
            .predict(x)
    }
}
