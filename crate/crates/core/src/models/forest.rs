//! Random forests: bagged CART trees with per-split feature subsampling.

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, FeatureSampler, TreeConfig, TreeModel};
use super::{check_training_data, ModelError};
use crate::rng::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features drawn per split; `None` means `max(1, d / 3)`.
    pub m_try: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            m_try: None,
            bootstrap: true,
            max_depth: 12,
            min_samples_leaf: 2,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolved_m_try(&self, n_features: usize) -> usize {
        self.m_try.unwrap_or((n_features / 3).max(1))
    }

    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
        }
    }

    pub fn summary(&self) -> String {
        let m_try = self
            .m_try
            .map_or_else(|| "d/3".to_string(), |m| m.to_string());
        format!(
            "n_trees={} m_try={} bootstrap={} max_depth={} min_samples_leaf={}",
            self.n_trees, m_try, self.bootstrap, self.max_depth, self.min_samples_leaf
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub m_try: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub n_features: usize,
}

impl ForestModel {
    /// Arithmetic mean of the tree predictions, accumulated in tree order.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let n_trees = self.trees.len() as f64;
        x.rows()
            .into_iter()
            .map(|row| {
                let mut preds = self.trees.iter().map(|t| t.predict_row(|j| row[j]));
                let first = preds.next().expect("forest has at least one tree");
                preds.fold(first, |acc, p| acc + p) / n_trees
            })
            .collect()
    }
}

/// Fits `n_trees` trees in parallel. Each tree's bootstrap sample and split
/// feature draws come from a generator seeded by `(seed, tree index)`, so the
/// forest does not depend on thread count or scheduling.
pub fn fit_forest(x: ArrayView2<'_, f64>, y: &[f64], config: &ForestConfig) -> Result<ForestModel, ModelError> {
    check_training_data(&x, y)?;
    let d = x.ncols();
    if config.n_trees == 0 {
        return Err(ModelError::InvalidConfig("n_trees must be at least 1".into()));
    }
    let m_try = config.resolved_m_try(d);
    if m_try == 0 || m_try > d {
        return Err(ModelError::InvalidConfig(format!(
            "m_try must lie in 1..={d}, got {m_try}"
        )));
    }
    let tree_config = config.tree_config();
    tree_config.validate()?;
    let n = y.len();

    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded_rng(derive_seed(config.seed, t as u64));
            let sampler = |rng| FeatureSampler { rng, m_try };
            if config.bootstrap {
                let rows: Vec<usize> = (0..n)
                    .map(|_| rand::RngExt::random_range(&mut rng, 0..n))
                    .collect();
                let xb = x.select(Axis(0), &rows);
                let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                grow_tree(xb.view(), &yb, &tree_config, Some(sampler(&mut rng)))
            } else {
                grow_tree(x, y, &tree_config, Some(sampler(&mut rng)))
            }
        })
        .collect();

    Ok(ForestModel {
        trees,
        m_try,
        bootstrap: config.bootstrap,
        seed: config.seed,
        n_features: d,
    })
}
