//! Fully connected feedforward network: ReLU hidden layers, one linear output
//! unit, mean-squared-error loss, plain mini-batch gradient descent.
//!
//! Training targets are standardized with the training mean and standard
//! deviation, which the model keeps as a fixed output transform. The loss and
//! its gradients are measured in standardized units; predictions are mapped
//! back to the original scale.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::RngExt;
use serde::{Deserialize, Serialize};

use super::{check_training_data, ModelError};
use crate::rng::{derive_seed, fisher_yates, seeded_rng};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AnnConfig {
    fn default() -> Self {
        AnnConfig {
            hidden_sizes: vec![64, 32],
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl AnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_sizes.contains(&0) {
            return Err(ModelError::InvalidConfig("hidden layer of width 0".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "ann learning rate must be finite and >= 0".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let hidden: Vec<String> = self.hidden_sizes.iter().map(|h| h.to_string()).collect();
        format!(
            "hidden=[{}] relu lr={} epochs={} batch={}",
            hidden.join(","),
            self.learning_rate,
            self.epochs,
            self.batch_size
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnModel {
    /// Input width, hidden widths, then 1.
    pub layer_sizes: Vec<usize>,
    /// One `(fan_out, fan_in)` matrix per layer.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub config: AnnConfig,
    /// Output transform: prediction = network output × scale + mean.
    pub target_mean: f64,
    pub target_scale: f64,
    /// Sample-weighted mean batch loss over the last training epoch.
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnGradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl AnnGradients {
    /// Same ordering as [`AnnModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }
}

fn flatten(weights: &[Array2<f64>], biases: &[Array1<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in weights.iter().zip(biases) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out
}

impl AnnModel {
    /// Scaled-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn initialize(n_features: usize, config: &AnnConfig) -> Result<Self, ModelError> {
        config.validate()?;
        if n_features == 0 {
            return Err(ModelError::InvalidConfig("network needs at least one input".into()));
        }
        let mut layer_sizes = Vec::with_capacity(config.hidden_sizes.len() + 2);
        layer_sizes.push(n_features);
        layer_sizes.extend(&config.hidden_sizes);
        layer_sizes.push(1);

        let mut rng = seeded_rng(derive_seed(config.seed, INIT_STREAM));
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || {
                (2.0 * rng.random::<f64>() - 1.0) * limit
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(AnnModel {
            layer_sizes,
            weights,
            biases,
            config: config.clone(),
            target_mean: 0.0,
            target_scale: 1.0,
            final_loss: None,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Pre-activations of every layer and the network output.
    fn forward(&self, x: ArrayView2<'_, f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        let last = self.n_layers() - 1;
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(&w.t()) + b;
            a = if l < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
        }
        (pre, a)
    }

    /// Smallest `|z|` over all hidden-unit pre-activations on `x`; infinite
    /// without hidden layers. Gradients are undefined where this is 0.
    pub fn min_hidden_preactivation(&self, x: ArrayView2<'_, f64>) -> f64 {
        let (pre, _) = self.forward(x);
        pre[..pre.len() - 1]
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.forward(x)
            .1
            .column(0)
            .iter()
            .map(|v| v * self.target_scale + self.target_mean)
            .collect()
    }

    fn standardize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|v| (v - self.target_mean) / self.target_scale)
            .collect()
    }

    /// Mean squared error on `(x, y)`, in standardized target units.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> f64 {
        let out = self.forward(x).1;
        mse(out.column(0).iter().copied(), &self.standardize(y))
    }

    /// [`AnnModel::loss`] and its exact gradient with respect to every weight and bias.
    pub fn loss_and_gradients(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> (f64, AnnGradients) {
        let m = y.len() as f64;
        let y = self.standardize(y);
        let (pre, out) = self.forward(x);
        let loss = mse(out.column(0).iter().copied(), &y);

        let mut delta = Array2::from_shape_fn((y.len(), 1), |(i, _)| 2.0 * (out[[i, 0]] - y[i]) / m);
        let mut grad_w = vec![Array2::zeros((0, 0)); self.n_layers()];
        let mut grad_b = vec![Array1::zeros(0); self.n_layers()];
        for l in (0..self.n_layers()).rev() {
            let input = if l == 0 {
                x.to_owned()
            } else {
                pre[l - 1].mapv(|v| v.max(0.0))
            };
            grad_w[l] = delta.t().dot(&input);
            grad_b[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                back.zip_mut_with(&pre[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        (
            loss,
            AnnGradients {
                weights: grad_w,
                biases: grad_b,
            },
        )
    }

    pub fn apply_gradients(&mut self, grads: &AnnGradients, learning_rate: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-learning_rate, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-learning_rate, g);
        }
    }

    /// All parameters: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Overwrites parameters from a slice laid out as [`AnnModel::parameters`].
    pub fn set_parameters(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.n_parameters(), "parameter count");
        let mut it = values.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            b.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

fn mse(pred: impl Iterator<Item = f64>, y: &[f64]) -> f64 {
    pred.zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Mini-batch gradient descent; batches come from a fresh seeded shuffle each
/// epoch. A batch size above `n` is clamped to `n`.
pub fn fit_ann(x: ArrayView2<'_, f64>, y: &[f64], config: &AnnConfig) -> Result<AnnModel, ModelError> {
    check_training_data(&x, y)?;
    let mut model = AnnModel::initialize(x.ncols(), config)?;
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    model.target_mean = mean;
    model.target_scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    let batch_size = config.batch_size.min(n);
    let mut rng = seeded_rng(derive_seed(config.seed, SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        fisher_yates(&mut order, &mut rng);
        let mut weighted_loss = 0.0;
        for (batch, rows) in order.chunks(batch_size).enumerate() {
            let xb = x.select(Axis(0), rows);
            let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let (loss, grads) = model.loss_and_gradients(xb.view(), &yb);
            if !loss.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    batch: Some(batch),
                });
            }
            weighted_loss += loss * rows.len() as f64;
            model.apply_gradients(&grads, config.learning_rate);
        }
        model.final_loss = Some(weighted_loss / n as f64);
    }
    if !model.is_finite() {
        return Err(ModelError::Diverged {
            epoch: config.epochs.saturating_sub(1),
            batch: None,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn shapes_chain() {
        let cfg = AnnConfig {
            hidden_sizes: vec![5, 3],
            ..AnnConfig::default()
        };
        let m = AnnModel::initialize(4, &cfg).unwrap();
        assert_eq!(m.layer_sizes, vec![4, 5, 3, 1]);
        let shapes: Vec<(usize, usize)> = m.weights.iter().map(|w| w.dim()).collect();
        assert_eq!(shapes, vec![(5, 4), (3, 5), (1, 3)]);
        assert_eq!(m.n_parameters(), 5 * 4 + 5 + 3 * 5 + 3 + 3 + 1);
        let limit = (6.0f64 / 9.0).sqrt();
        assert!(m.weights[0].iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let x = array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.9]];
        let y = [1.0, 2.0, 3.0];
        let cfg = AnnConfig {
            hidden_sizes: vec![4],
            learning_rate: 0.0,
            epochs: 7,
            batch_size: 2,
            seed: 3,
        };
        let fitted = fit_ann(x.view(), &y, &cfg).unwrap();
        let init = AnnModel::initialize(2, &cfg).unwrap();
        assert_eq!(fitted.weights, init.weights);
        assert_eq!(fitted.biases, init.biases);
        assert!(fitted.final_loss.is_some());
    }

    #[test]
    fn zero_epochs_has_no_loss() {
        let x = array![[0.1], [0.3]];
        let cfg = AnnConfig {
            epochs: 0,
            ..AnnConfig::default()
        };
        let m = fit_ann(x.view(), &[1.0, 2.0], &cfg).unwrap();
        assert_eq!(m.final_loss, None);
        let init = AnnModel::initialize(1, &cfg).unwrap();
        assert_eq!((m.weights, m.biases), (init.weights, init.biases));
        assert_eq!((m.target_mean, m.target_scale), (1.5, 0.5));
    }

    #[test]
    fn linear_map_learns_exact_line() {
        let x = ndarray::Array2::from_shape_fn((50, 1), |(i, _)| i as f64 / 49.0);
        let y: Vec<f64> = x.column(0).iter().map(|v| 2.0 * v + 1.0).collect();
        let cfg = AnnConfig {
            hidden_sizes: vec![],
            learning_rate: 0.1,
            epochs: 400,
            batch_size: 10,
            seed: 1,
        };
        let m = fit_ann(x.view(), &y, &cfg).unwrap();
        let rmse = m.loss(x.view(), &y).sqrt();
        assert!(rmse < 1e-2, "rmse {rmse}");
    }

    #[test]
    fn parameters_round_trip() {
        let mut m = AnnModel::initialize(3, &AnnConfig { hidden_sizes: vec![2], ..AnnConfig::default() }).unwrap();
        let mut p = m.parameters();
        p[0] = 42.0;
        let last = p.len() - 1;
        p[last] = -1.0;
        m.set_parameters(&p);
        assert_eq!(m.weights[0][[0, 0]], 42.0);
        assert_eq!(m.biases[1][0], -1.0);
        assert_eq!(m.parameters(), p);
    }

    #[test]
    fn divergence_is_reported() {
        let x = array![[1.0], [2.0], [3.0]];
        let cfg = AnnConfig {
            hidden_sizes: vec![],
            learning_rate: 10.0,
            epochs: 500,
            batch_size: 3,
            seed: 0,
        };
        let err = fit_ann(x.view(), &[1e3, 2e3, 3e3], &cfg).unwrap_err();
        assert!(matches!(err, ModelError::Diverged { batch: Some(0), .. }), "{err:?}");
    }
}
