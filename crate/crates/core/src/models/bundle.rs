//! Versioned JSON model bundles.
//!
//! Every floating-point parameter is stored as base64 of its little-endian
//! IEEE-754 bytes, so a loaded model predicts bit-identically to the one saved.
//! Hyperparameters are stored as plain JSON values for readability.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use super::{
    AnnConfig, AnnModel, ForestModel, LinearModel, ModelKind, Regressor, SvrConfig, SvrModel,
    TreeConfig, TreeModel, TreeNode,
};
use crate::dataset::Schema;
use crate::features::LabelEncoder;
use crate::preprocess::MinMaxScaler;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("unsupported bundle format version {0} (this build reads version {FORMAT_VERSION})")]
    Version(u64),
    #[error("unknown model kind {0:?}")]
    Kind(String),
    #[error("corrupt model bundle: {0}")]
    Corrupt(String),
    #[error("bundle I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn corrupt(msg: impl std::fmt::Display) -> BundleError {
    BundleError::Corrupt(msg.to_string())
}

/// A fitted model with everything needed to turn raw rows into predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: Regressor,
    pub scaler: MinMaxScaler,
    pub label_encoders: Vec<LabelEncoder>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub schema: Schema,
}

/// f64 array stored as base64 of little-endian IEEE-754 bytes.
#[derive(Debug, Clone, PartialEq)]
struct Floats(Vec<f64>);

impl Serialize for Floats {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = self.0.iter().flat_map(|v| v.to_le_bytes()).collect();
        s.serialize_str(&STANDARD.encode(bytes))
    }
}

impl<'de> Deserialize<'de> for Floats {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom(format!(
                "float payload of {} bytes is not a multiple of 8",
                bytes.len()
            )));
        }
        Ok(Floats(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        ))
    }
}

impl Floats {
    fn scalar(v: f64) -> Self {
        Floats(vec![v])
    }

    fn into_scalar(self, field: &str) -> Result<f64, BundleError> {
        match self.0.as_slice() {
            [v] => Ok(*v),
            other => Err(corrupt(format!(
                "{field}: expected 1 value, found {}",
                other.len()
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u64,
    kind: String,
    hyperparameters: Value,
    parameters: Value,
    scaler: ScalerDoc,
    label_encoders: Vec<LabelEncoder>,
    feature_names: Vec<String>,
    target_name: String,
    schema: Schema,
}

#[derive(Serialize, Deserialize)]
struct ScalerDoc {
    feature_names: Vec<String>,
    min: Floats,
    max: Floats,
}

#[derive(Serialize, Deserialize)]
struct LinearParams {
    weights: Floats,
    intercept: Floats,
    regularized: bool,
}

#[derive(Serialize, Deserialize)]
struct SvrParams {
    weights: Floats,
    intercept: Floats,
}

/// Pre-order node arrays; `feature = -1` marks a leaf.
#[derive(Serialize, Deserialize)]
struct TreeParams {
    n_features: usize,
    feature: Vec<i64>,
    left: Vec<usize>,
    right: Vec<usize>,
    threshold: Floats,
    value: Floats,
    n_samples: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ForestHyper {
    n_trees: usize,
    m_try: usize,
    bootstrap: bool,
    max_depth: usize,
    min_samples_leaf: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ForestParams {
    trees: Vec<TreeParams>,
}

#[derive(Serialize, Deserialize)]
struct AnnHyper {
    #[serde(flatten)]
    config: AnnConfig,
    hidden_activation: String,
    output_activation: String,
}

#[derive(Serialize, Deserialize)]
struct AnnParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Floats>,
    biases: Vec<Floats>,
    target_mean: Floats,
    target_scale: Floats,
    final_loss: Option<Floats>,
}

fn tree_to_params(tree: &TreeModel) -> TreeParams {
    let mut p = TreeParams {
        n_features: tree.n_features,
        feature: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
        threshold: Floats(Vec::new()),
        value: Floats(Vec::new()),
        n_samples: Vec::new(),
    };
    fn visit(node: &TreeNode, p: &mut TreeParams) -> usize {
        let id = p.feature.len();
        p.feature.push(-1);
        p.left.push(0);
        p.right.push(0);
        p.threshold.0.push(0.0);
        p.value.0.push(0.0);
        p.n_samples.push(0);
        match node {
            TreeNode::Leaf { value, n_samples } => {
                p.value.0[id] = *value;
                p.n_samples[id] = *n_samples;
            }
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                p.feature[id] = *feature as i64;
                p.threshold.0[id] = *threshold;
                let l = visit(left, p);
                let r = visit(right, p);
                p.left[id] = l;
                p.right[id] = r;
            }
        }
        id
    }
    visit(&tree.root, &mut p);
    p
}

fn tree_from_params(p: TreeParams, config: &TreeConfig) -> Result<TreeModel, BundleError> {
    let n = p.feature.len();
    if n == 0
        || [p.left.len(), p.right.len(), p.threshold.0.len(), p.value.0.len(), p.n_samples.len()]
            .iter()
            .any(|&len| len != n)
    {
        return Err(corrupt("tree node arrays are empty or of unequal length"));
    }
    // Children must point strictly forward (pre-order), which also rules out cycles.
    fn build(p: &TreeParams, id: usize, depth: usize) -> Result<TreeNode, BundleError> {
        if depth > p.feature.len() {
            return Err(corrupt("tree structure is cyclic"));
        }
        let f = p.feature[id];
        if f < 0 {
            return Ok(TreeNode::Leaf {
                value: p.value.0[id],
                n_samples: p.n_samples[id],
            });
        }
        let (l, r) = (p.left[id], p.right[id]);
        if f as usize >= p.n_features || l <= id || r <= id || l >= p.feature.len() || r >= p.feature.len() {
            return Err(corrupt(format!("tree node {id} is malformed")));
        }
        Ok(TreeNode::Internal {
            feature: f as usize,
            threshold: p.threshold.0[id],
            left: Box::new(build(p, l, depth + 1)?),
            right: Box::new(build(p, r, depth + 1)?),
        })
    }
    let root = build(&p, 0, 0)?;
    Ok(TreeModel {
        root,
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        n_features: p.n_features,
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("bundle parts serialize")
}

fn from_value<T: DeserializeOwned>(v: Value, what: &str) -> Result<T, BundleError> {
    serde_json::from_value(v).map_err(|e| corrupt(format!("{what}: {e}")))
}

impl ModelBundle {
    pub fn to_json(&self) -> String {
        let (hyperparameters, parameters) = match &self.model {
            Regressor::Linear(m) => (
                Value::Object(Default::default()),
                to_value(&LinearParams {
                    weights: Floats(m.weights.clone()),
                    intercept: Floats::scalar(m.intercept),
                    regularized: m.regularized,
                }),
            ),
            Regressor::Svr(m) => (
                to_value(&m.config),
                to_value(&SvrParams {
                    weights: Floats(m.weights.clone()),
                    intercept: Floats::scalar(m.intercept),
                }),
            ),
            Regressor::Tree(m) => (
                to_value(&TreeConfig {
                    max_depth: m.max_depth,
                    min_samples_leaf: m.min_samples_leaf,
                }),
                to_value(&tree_to_params(m)),
            ),
            Regressor::Forest(m) => {
                let first = &m.trees[0];
                (
                    to_value(&ForestHyper {
                        n_trees: m.trees.len(),
                        m_try: m.m_try,
                        bootstrap: m.bootstrap,
                        max_depth: first.max_depth,
                        min_samples_leaf: first.min_samples_leaf,
                        seed: m.seed,
                    }),
                    to_value(&ForestParams {
                        trees: m.trees.iter().map(tree_to_params).collect(),
                    }),
                )
            }
            Regressor::Ann(m) => (
                to_value(&AnnHyper {
                    config: m.config.clone(),
                    hidden_activation: "relu".into(),
                    output_activation: "identity".into(),
                }),
                to_value(&AnnParams {
                    layer_sizes: m.layer_sizes.clone(),
                    weights: m.weights.iter().map(|w| Floats(w.iter().copied().collect())).collect(),
                    biases: m.biases.iter().map(|b| Floats(b.to_vec())).collect(),
                    target_mean: Floats::scalar(m.target_mean),
                    target_scale: Floats::scalar(m.target_scale),
                    final_loss: m.final_loss.map(Floats::scalar),
                }),
            ),
        };
        let doc = Document {
            format_version: FORMAT_VERSION,
            kind: self.model.kind().tag().to_string(),
            hyperparameters,
            parameters,
            scaler: ScalerDoc {
                feature_names: self.scaler.feature_names.clone(),
                min: Floats(self.scaler.min.clone()),
                max: Floats(self.scaler.max.clone()),
            },
            label_encoders: self.label_encoders.clone(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            schema: self.schema.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("bundle serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        let raw: Value = serde_json::from_str(text).map_err(corrupt)?;
        let version = raw
            .get("format_version")
            .ok_or_else(|| corrupt("missing format_version"))?
            .as_u64()
            .ok_or_else(|| corrupt("format_version is not an unsigned integer"))?;
        if version != FORMAT_VERSION {
            return Err(BundleError::Version(version));
        }
        let kind_tag = raw
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| corrupt("missing kind"))?;
        let kind: ModelKind = kind_tag
            .parse()
            .map_err(|_| BundleError::Kind(kind_tag.to_string()))?;
        let doc: Document = from_value(raw, "bundle")?;

        let model = match kind {
            ModelKind::Linear => {
                let p: LinearParams = from_value(doc.parameters, "linear parameters")?;
                Regressor::Linear(LinearModel {
                    weights: p.weights.0,
                    intercept: p.intercept.into_scalar("intercept")?,
                    regularized: p.regularized,
                })
            }
            ModelKind::Svr => {
                let config: SvrConfig = from_value(doc.hyperparameters, "svr hyperparameters")?;
                let p: SvrParams = from_value(doc.parameters, "svr parameters")?;
                Regressor::Svr(SvrModel {
                    weights: p.weights.0,
                    intercept: p.intercept.into_scalar("intercept")?,
                    config,
                })
            }
            ModelKind::Tree => {
                let config: TreeConfig = from_value(doc.hyperparameters, "tree hyperparameters")?;
                let p: TreeParams = from_value(doc.parameters, "tree parameters")?;
                Regressor::Tree(tree_from_params(p, &config)?)
            }
            ModelKind::Forest => {
                let h: ForestHyper = from_value(doc.hyperparameters, "forest hyperparameters")?;
                let p: ForestParams = from_value(doc.parameters, "forest parameters")?;
                if p.trees.is_empty() || p.trees.len() != h.n_trees {
                    return Err(corrupt("forest tree count does not match n_trees"));
                }
                let config = TreeConfig {
                    max_depth: h.max_depth,
                    min_samples_leaf: h.min_samples_leaf,
                };
                let trees = p
                    .trees
                    .into_iter()
                    .map(|t| tree_from_params(t, &config))
                    .collect::<Result<Vec<_>, _>>()?;
                let n_features = trees[0].n_features;
                if trees.iter().any(|t| t.n_features != n_features) {
                    return Err(corrupt("forest trees disagree on feature count"));
                }
                Regressor::Forest(ForestModel {
                    trees,
                    m_try: h.m_try,
                    bootstrap: h.bootstrap,
                    seed: h.seed,
                    n_features,
                })
            }
            ModelKind::Ann => {
                let h: AnnHyper = from_value(doc.hyperparameters, "ann hyperparameters")?;
                if h.hidden_activation != "relu" || h.output_activation != "identity" {
                    return Err(corrupt("unsupported activation functions"));
                }
                let p: AnnParams = from_value(doc.parameters, "ann parameters")?;
                Regressor::Ann(ann_from_params(p, h.config)?)
            }
        };

        let scaler = MinMaxScaler {
            feature_names: doc.scaler.feature_names,
            min: doc.scaler.min.0,
            max: doc.scaler.max.0,
        };
        let d = model.n_features();
        if scaler.min.len() != d || scaler.max.len() != d || scaler.feature_names.len() != d {
            return Err(corrupt("scaler width does not match the model"));
        }
        if doc.feature_names.len() != d {
            return Err(corrupt("feature_names length does not match the model"));
        }
        if let Some(bad) = doc.label_encoders.iter().find(|e| !e.is_well_formed()) {
            return Err(corrupt(format!(
                "label encoder for {:?} has non-consecutive codes",
                bad.column_name
            )));
        }
        Ok(ModelBundle {
            model,
            scaler,
            label_encoders: doc.label_encoders,
            feature_names: doc.feature_names,
            target_name: doc.target_name,
            schema: doc.schema,
        })
    }
}

fn ann_from_params(p: AnnParams, config: AnnConfig) -> Result<AnnModel, BundleError> {
    let layers = p.layer_sizes.len().saturating_sub(1);
    if layers == 0
        || p.weights.len() != layers
        || p.biases.len() != layers
        || p.layer_sizes.last() != Some(&1)
        || p.layer_sizes[1..p.layer_sizes.len() - 1] != config.hidden_sizes[..]
    {
        return Err(corrupt("ann layer layout is inconsistent"));
    }
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for (l, (w, b)) in p.weights.into_iter().zip(p.biases).enumerate() {
        let (fan_in, fan_out) = (p.layer_sizes[l], p.layer_sizes[l + 1]);
        weights.push(
            Array2::from_shape_vec((fan_out, fan_in), w.0)
                .map_err(|_| corrupt(format!("ann layer {l} weight shape")))?,
        );
        if b.0.len() != fan_out {
            return Err(corrupt(format!("ann layer {l} bias length")));
        }
        biases.push(Array1::from(b.0));
    }
    let final_loss = p
        .final_loss
        .map(|f| f.into_scalar("final_loss"))
        .transpose()?;
    Ok(AnnModel {
        layer_sizes: p.layer_sizes,
        weights,
        biases,
        config,
        target_mean: p.target_mean.into_scalar("target_mean")?,
        target_scale: p.target_scale.into_scalar("target_scale")?,
        final_loss,
    })
}

pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<(), BundleError> {
    std::fs::write(path, bundle.to_json()).map_err(|source| BundleError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<ModelBundle, BundleError> {
    let text = std::fs::read_to_string(path).map_err(|source| BundleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ModelBundle::from_json(&text)
}
