//! CART regression trees grown greedily on weighted child MSE.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values of a feature; rows with `x <= threshold` go left. Candidates are
//! screened with centered prefix sums, and every candidate within a small band
//! of the best screened score is re-scored with a two-pass sum over the child
//! rows in row order, so near-ties are decided on exact per-partition values.
//! Remaining ties go to the lowest feature index, then the lowest threshold.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_training_data, ModelError};
use crate::rng::{sample_without_replacement, SeededRng};

/// Relative width of the screening band (fraction of the parent SSE).
const SCREEN_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 12,
            min_samples_leaf: 2,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.min_samples_leaf == 0 {
            return Err(ModelError::InvalidConfig(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "max_depth={} min_samples_leaf={}",
            self.max_depth, self.min_samples_leaf
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        n_samples: usize,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// `(value, n_samples)` of every leaf, left to right.
    pub fn leaves(&self) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                TreeNode::Leaf { value, n_samples } => out.push((*value, *n_samples)),
                TreeNode::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub root: TreeNode,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_features: usize,
}

impl TreeModel {
    pub fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row(*feature) <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| self.predict_row(|j| row[j]))
            .collect()
    }

    /// Feature and threshold of the root split, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.root {
            TreeNode::Internal {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            TreeNode::Leaf { .. } => None,
        }
    }
}

pub fn fit_tree(x: ArrayView2<'_, f64>, y: &[f64], config: &TreeConfig) -> Result<TreeModel, ModelError> {
    check_training_data(&x, y)?;
    config.validate()?;
    Ok(grow_tree(x, y, config, None))
}

/// Per-split feature subsampling used by random forests.
pub(crate) struct FeatureSampler<'r> {
    pub rng: &'r mut SeededRng,
    pub m_try: usize,
}

pub(crate) fn grow_tree(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    config: &TreeConfig,
    sampler: Option<FeatureSampler<'_>>,
) -> TreeModel {
    let mut grower = Grower {
        x,
        y,
        config,
        sampler,
    };
    let root = grower.grow((0..y.len()).collect(), 0);
    TreeModel {
        root,
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        n_features: x.ncols(),
    }
}

/// Threshold strictly separating `lo < hi`, as close to their midpoint as f64 allows.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

fn mean(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (sum / n as f64, n)
}

struct Grower<'a, 'r> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    config: &'a TreeConfig,
    sampler: Option<FeatureSampler<'r>>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    screened: f64,
}

impl Grower<'_, '_> {
    fn sse(&self, rows: impl Iterator<Item = usize> + Clone) -> f64 {
        let (m, _) = mean(rows.clone().map(|i| self.y[i]));
        rows.map(|i| (self.y[i] - m).powi(2)).sum()
    }

    /// Weighted child MSE `(SSE_left + SSE_right) / n`, summed in row order.
    fn exact_score(&self, rows: &[usize], feature: usize, threshold: f64) -> f64 {
        let goes_left = |i: &usize| self.x[[*i, feature]] <= threshold;
        let left = self.sse(rows.iter().copied().filter(goes_left));
        let right = self.sse(rows.iter().copied().filter(|i| !goes_left(i)));
        (left + right) / rows.len() as f64
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> TreeNode {
        let (value, n) = mean(rows.iter().map(|&i| self.y[i]));
        let leaf = TreeNode::Leaf {
            value,
            n_samples: n,
        };
        if depth >= self.config.max_depth || n < 2 * self.config.min_samples_leaf {
            return leaf;
        }
        let parent_sse = self.sse(rows.iter().copied());
        if parent_sse <= 0.0 {
            return leaf;
        }
        let d = self.x.ncols();
        let features: Vec<usize> = match self.sampler.as_mut() {
            Some(s) => sample_without_replacement(d, s.m_try, s.rng),
            None => (0..d).collect(),
        };
        let Some((feature, threshold, score)) = self.best_split(&rows, &features, value, parent_sse)
        else {
            return leaf;
        };
        if score >= parent_sse / n as f64 {
            return leaf;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[[i, feature]] <= threshold);
        let left = self.grow(left, depth + 1);
        let right = self.grow(right, depth + 1);
        TreeNode::Internal {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(
        &self,
        rows: &[usize],
        features: &[usize],
        node_mean: f64,
        parent_sse: f64,
    ) -> Option<(usize, f64, f64)> {
        let n = rows.len();
        let min_leaf = self.config.min_samples_leaf;
        let mut candidates = Vec::new();
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &feature in features {
            pairs.clear();
            pairs.extend(
                rows.iter()
                    .map(|&i| (self.x[[i, feature]], self.y[i] - node_mean)),
            );
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (t1, t2) = pairs
                .iter()
                .fold((0.0, 0.0), |(s1, s2), &(_, r)| (s1 + r, s2 + r * r));
            let (mut s1, mut s2) = (0.0, 0.0);
            for k in 1..n {
                let r = pairs[k - 1].1;
                s1 += r;
                s2 += r * r;
                if pairs[k - 1].0 >= pairs[k].0 || k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let (nl, nr) = (k as f64, (n - k) as f64);
                let left = (s2 - s1 * s1 / nl).max(0.0);
                let right = ((t2 - s2) - (t1 - s1) * (t1 - s1) / nr).max(0.0);
                candidates.push(Candidate {
                    feature,
                    threshold: midpoint(pairs[k - 1].0, pairs[k].0),
                    screened: left + right,
                });
            }
        }
        let best_screened = candidates
            .iter()
            .map(|c| c.screened)
            .fold(f64::INFINITY, f64::min);
        let cutoff = best_screened + SCREEN_BAND * parent_sse;
        // `features` is ascending and thresholds ascend within a feature, so a
        // strict `<` keeps the lowest (feature, threshold) among exact ties.
        let mut best: Option<(usize, f64, f64)> = None;
        for c in candidates.iter().filter(|c| c.screened <= cutoff) {
            let score = self.exact_score(rows, c.feature, c.threshold);
            if best.is_none_or(|(_, _, s)| score < s) {
                best = Some((c.feature, c.threshold, score));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn step_data() -> (Array2<f64>, Vec<f64>) {
        (array![[0.0], [0.25], [0.75], [1.0]], vec![0.0, 0.0, 1.0, 1.0])
    }

    #[test]
    fn depth_zero_is_mean_stump() {
        let (x, y) = step_data();
        let cfg = TreeConfig {
            max_depth: 0,
            min_samples_leaf: 1,
        };
        let t = fit_tree(x.view(), &y, &cfg).unwrap();
        assert_eq!(
            t.root,
            TreeNode::Leaf {
                value: 0.5,
                n_samples: 4
            }
        );
    }

    #[test]
    fn step_function_single_split() {
        let (x, y) = step_data();
        let cfg = TreeConfig {
            max_depth: 5,
            min_samples_leaf: 1,
        };
        let t = fit_tree(x.view(), &y, &cfg).unwrap();
        assert_eq!(t.root_split(), Some((0, 0.5)));
        assert_eq!(t.root.depth(), 1);
        assert_eq!(t.predict(x.view()), y);
    }

    #[test]
    fn grows_to_purity_and_reproduces_targets() {
        let x = array![[0.0, 5.0], [1.0, 3.0], [2.0, 9.0], [3.0, 1.0]];
        let y = vec![3.0, -1.0, 4.0, 10.0];
        let cfg = TreeConfig {
            max_depth: 10,
            min_samples_leaf: 1,
        };
        let t = fit_tree(x.view(), &y, &cfg).unwrap();
        assert_eq!(t.predict(x.view()), y);
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 13 + j * 7) % 17) as f64);
        let y: Vec<f64> = (0..40).map(|i| ((i * 31) % 11) as f64).collect();
        for (max_depth, min_leaf) in [(1, 1), (3, 2), (6, 5), (20, 3)] {
            let cfg = TreeConfig {
                max_depth,
                min_samples_leaf: min_leaf,
            };
            let t = fit_tree(x.view(), &y, &cfg).unwrap();
            assert!(t.root.depth() <= max_depth);
            let leaves = t.root.leaves();
            assert!(leaves.iter().all(|&(_, n)| n >= min_leaf));
            assert_eq!(leaves.iter().map(|l| l.1).sum::<usize>(), 40);
        }
    }

    #[test]
    fn constant_feature_gives_leaf() {
        let x = array![[1.0], [1.0], [1.0]];
        let t = fit_tree(x.view(), &[1.0, 2.0, 3.0], &TreeConfig::default()).unwrap();
        assert!(t.root_split().is_none());
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // Both columns separate the targets identically.
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let y = vec![0.0, 0.0, 5.0, 5.0];
        let cfg = TreeConfig {
            max_depth: 1,
            min_samples_leaf: 1,
        };
        let t = fit_tree(x.view(), &y, &cfg).unwrap();
        assert_eq!(t.root_split(), Some((0, 1.5)));
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let a = 1.0_f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
        assert_eq!(midpoint(2.0, 4.0), 3.0);
    }

    #[test]
    fn empty_and_invalid() {
        let x = Array2::<f64>::zeros((0, 1));
        assert_eq!(
            fit_tree(x.view(), &[], &TreeConfig::default()),
            Err(ModelError::EmptyData)
        );
        let (x, y) = step_data();
        let cfg = TreeConfig {
            max_depth: 3,
            min_samples_leaf: 0,
        };
        assert!(fit_tree(x.view(), &y, &cfg).is_err());
    }
}
