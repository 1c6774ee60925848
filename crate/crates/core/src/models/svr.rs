//! Linear epsilon-insensitive support vector regression, trained in the primal.
//!
//! The objective is
//!
//! ```text
//! J(w, b) = ½‖w‖² + c · Σᵢ max(0, |yᵢ − (w·xᵢ + b)| − ε)
//! ```
//!
//! minimized by full-batch subgradient descent with a constant step from
//! `w = 0, b = 0`. Residuals exactly on the tube boundary contribute a zero
//! subgradient. The procedure uses no randomness; `seed` is carried only so
//! every model config has the same shape.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_training_data, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrConfig {
    pub epsilon: f64,
    pub c: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            epsilon: 0.1,
            c: 1.0,
            learning_rate: 1e-3,
            epochs: 2000,
            seed: 0,
        }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("svr epsilon must be finite and >= 0");
        }
        // c = 0 is accepted: the objective degenerates to the regularizer alone.
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad("svr c must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("svr learning rate must be finite and > 0");
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "epsilon={} c={} lr={} epochs={}",
            self.epsilon, self.c, self.learning_rate, self.epochs
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub config: SvrConfig,
}

impl SvrModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| decision(&self.weights, self.intercept, row.iter()))
            .collect()
    }

    pub fn objective(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> f64 {
        objective(&self.weights, self.intercept, x, y, &self.config)
    }
}

fn decision<'a>(w: &[f64], b: f64, row: impl Iterator<Item = &'a f64>) -> f64 {
    row.zip(w).fold(b, |acc, (v, wj)| acc + v * wj)
}

fn objective(w: &[f64], b: f64, x: ArrayView2<'_, f64>, y: &[f64], cfg: &SvrConfig) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &t)| ((t - decision(w, b, row.iter())).abs() - cfg.epsilon).max(0.0))
        .sum();
    reg + cfg.c * loss
}

pub fn fit_svr(x: ArrayView2<'_, f64>, y: &[f64], config: &SvrConfig) -> Result<SvrModel, ModelError> {
    check_training_data(&x, y)?;
    config.validate()?;
    let d = x.ncols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad_w = vec![0.0; d];

    for epoch in 0..config.epochs {
        grad_w.copy_from_slice(&w);
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (row, &t) in x.rows().into_iter().zip(y) {
            let r = t - decision(&w, b, row.iter());
            let excess = r.abs() - config.epsilon;
            if excess > 0.0 {
                loss += excess;
                // d/dθ of c·(|r| − ε) = −c·sign(r)·∂f/∂θ
                let s = -config.c * r.signum();
                for (g, v) in grad_w.iter_mut().zip(row.iter()) {
                    *g += s * v;
                }
                grad_b += s;
            }
        }
        let value = 0.5 * w.iter().map(|v| v * v).sum::<f64>() + config.c * loss;
        if !value.is_finite() {
            return Err(ModelError::Diverged { epoch, batch: None });
        }
        for (wj, g) in w.iter_mut().zip(&grad_w) {
            *wj -= config.learning_rate * g;
        }
        b -= config.learning_rate * grad_b;
    }
    if w.iter().chain(std::iter::once(&b)).any(|v| !v.is_finite()) {
        return Err(ModelError::Diverged {
            epoch: config.epochs.saturating_sub(1),
            batch: None,
        });
    }
    Ok(SvrModel {
        weights: w,
        intercept: b,
        config: config.clone(),
    })
}
