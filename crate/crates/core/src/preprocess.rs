//! MinMax feature scaling and seeded train/test splitting.

use ndarray::{Array2, Axis, Zip};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::rng::{fisher_yates, seeded_rng};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("cannot fit a scaler on an empty matrix")]
    EmptyMatrix,
    #[error("feature mismatch: scaler fitted on {expected:?}, got {found:?}")]
    FeatureMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("need at least 2 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("ratio {ratio} leaves the training partition empty for n = {n}")]
    EmptyTrain { n: usize, ratio: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub feature_names: Vec<String>,
}

pub fn fit_minmax(features: &FeatureMatrix) -> Result<MinMaxScaler, PreprocessError> {
    if features.n_rows() == 0 {
        return Err(PreprocessError::EmptyMatrix);
    }
    let (min, max) = features
        .values
        .axis_iter(Axis(1))
        .map(|col| {
            col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
        })
        .unzip();
    Ok(MinMaxScaler {
        min,
        max,
        feature_names: features.feature_names.clone(),
    })
}

impl MinMaxScaler {
    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    fn check(&self, features: &FeatureMatrix) -> Result<(), PreprocessError> {
        if features.feature_names != self.feature_names
            || features.n_features() != self.n_features()
        {
            return Err(PreprocessError::FeatureMismatch {
                expected: self.feature_names.clone(),
                found: features.feature_names.clone(),
            });
        }
        Ok(())
    }

    /// Maps each column to `(x - min) / (max - min)`; constant columns map to 0.
    pub fn transform(&self, features: &FeatureMatrix) -> Result<FeatureMatrix, PreprocessError> {
        self.check(features)?;
        let mut values = features.values.clone();
        self.transform_in_place(&mut values);
        Ok(FeatureMatrix {
            values,
            feature_names: features.feature_names.clone(),
        })
    }

    /// Scales raw rows in place; the caller guarantees the column count.
    pub fn transform_in_place(&self, values: &mut Array2<f64>) {
        for (j, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, span) = (self.min[j], self.max[j] - self.min[j]);
            if span > 0.0 {
                col.mapv_inplace(|v| (v - lo) / span);
            } else {
                col.fill(0.0);
            }
        }
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            let span = self.max[j] - self.min[j];
            *v = if span > 0.0 { (*v - self.min[j]) / span } else { 0.0 };
        }
    }

    pub fn inverse_transform(&self, scaled: &FeatureMatrix) -> Result<FeatureMatrix, PreprocessError> {
        self.check(scaled)?;
        let mut values = scaled.values.clone();
        for (j, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, span) = (self.min[j], self.max[j] - self.min[j]);
            col.mapv_inplace(|v| v * span + lo);
        }
        Ok(FeatureMatrix {
            values,
            feature_names: scaled.feature_names.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
}

/// Number of training rows for `n` rows at `ratio`.
pub fn train_size(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).floor() as usize
}

/// Shuffles `0..n` with a seeded Fisher–Yates pass; the first `floor(ratio * n)`
/// indices form the training partition.
pub fn train_test_split(n: usize, ratio: f64, seed: u64) -> Result<SplitResult, PreprocessError> {
    if n < 2 {
        return Err(PreprocessError::TooFewRows(n));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PreprocessError::BadRatio(ratio));
    }
    let n_train = train_size(n, ratio);
    if n_train == 0 {
        return Err(PreprocessError::EmptyTrain { n, ratio });
    }
    let mut order: Vec<usize> = (0..n).collect();
    fisher_yates(&mut order, &mut seeded_rng(seed));
    let test_indices = order.split_off(n_train);
    Ok(SplitResult {
        train_indices: order,
        test_indices,
        ratio,
        seed,
    })
}

/// Max absolute elementwise difference between two equally shaped matrices.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut worst = 0.0_f64;
    Zip::from(a).and(b).for_each(|x, y| worst = worst.max((x - y).abs()));
    worst
}
