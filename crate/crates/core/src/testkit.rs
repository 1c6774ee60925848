//! Synthetic data with planted signal, plus brute-force oracles for checking
//! the tree split search and network backpropagation.

use chrono::{Days, NaiveDate};
use ndarray::ArrayView2;
use rand::RngExt;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::RawTable;
use crate::models::AnnModel;
use crate::rng::{derive_seed, seeded_rng, stream};

/// Largest sample the exhaustive split oracle accepts.
pub const ORACLE_MAX_ROWS: usize = 64;

pub const LINEAR_INTERCEPT: f64 = 20.0;
/// Weights on views, likes, dislikes and comment, in that order.
pub const LINEAR_WEIGHTS: [f64; 4] = [0.002, 0.04, -0.1, 0.15];
pub const CATEGORY_WEIGHT: f64 = 5.0;
const CATEGORIES: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];

#[derive(Debug, Error, PartialEq)]
pub enum TestkitError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("oracle input has {0} rows; at most {ORACLE_MAX_ROWS} are supported")]
    TooLarge(usize),
    #[error("oracle input is empty or has mismatched lengths")]
    BadInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Linear,
    TreeStructured,
    NoisyMixed,
}

impl std::str::FromStr for SyntheticKind {
    type Err = TestkitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(SyntheticKind::Linear),
            "tree_structured" | "tree" => Ok(SyntheticKind::TreeStructured),
            "noisy_mixed" | "mixed" => Ok(SyntheticKind::NoisyMixed),
            other => Err(TestkitError::Spec(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub kind: SyntheticKind,
    pub noise_sd: f64,
    pub seed: u64,
    /// How many of views, likes, dislikes, comment drive the linear target (1..=4).
    pub d_numeric: usize,
    pub include_categorical: bool,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n_rows: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_rows,
            kind,
            noise_sd: 10.0,
            seed,
            d_numeric: 4,
            include_categorical: true,
        }
    }

    pub fn validate(&self) -> Result<(), TestkitError> {
        if self.n_rows < 2 {
            return Err(TestkitError::Spec(format!("n_rows must be >= 2, got {}", self.n_rows)));
        }
        if !(1..=LINEAR_WEIGHTS.len()).contains(&self.d_numeric) {
            return Err(TestkitError::Spec(format!(
                "d_numeric must lie in 1..=4, got {}",
                self.d_numeric
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(TestkitError::Spec("noise_sd must be finite and >= 0".into()));
        }
        Ok(())
    }
}

struct Row {
    views: f64,
    likes: f64,
    dislikes: f64,
    comment: f64,
    published: NaiveDate,
    duration_secs: u64,
    category: usize,
}

fn iso_duration(secs: u64) -> String {
    let (h, m, s) = (secs / 3600, secs / 60 % 60, secs % 60);
    let mut out = String::from("PT");
    if h > 0 {
        out.push_str(&format!("{h}H"));
    }
    if m > 0 {
        out.push_str(&format!("{m}M"));
    }
    if s > 0 || (h == 0 && m == 0) {
        out.push_str(&format!("{s}S"));
    }
    out
}

/// Two-level threshold rule on views then likes.
pub fn tree_rule(views: f64, likes: f64) -> f64 {
    if views <= 50_000.0 {
        if likes <= 600.0 {
            60.0
        } else {
            180.0
        }
    } else if likes <= 2_500.0 {
        320.0
    } else {
        520.0
    }
}

/// Generates a table in the nine-column ad-view layout.
///
/// Numeric columns hold integers, `published` is `YYYY-MM-DD`, `duration` is
/// ISO 8601 and `category` is a letter. For the linear kind the categorical
/// term uses the category's rank among the letters actually present, which is
/// exactly the code a fitted label encoder assigns.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<RawTable, TestkitError> {
    spec.validate()?;
    let base = derive_seed(spec.seed, stream::SYNTHETIC);
    let mut rng = seeded_rng(derive_seed(base, 0));
    let mut noise_rng = seeded_rng(derive_seed(base, 1));
    let epoch = NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date");

    let rows: Vec<Row> = (0..spec.n_rows)
        .map(|_| {
            let views = rng.random_range(1_000..=100_000u32) as f64;
            let likes = (views * rng.random_range(0.005..0.05)).round();
            let dislikes = (likes * rng.random_range(0.02..0.2)).round();
            let comment = (likes * rng.random_range(0.05..0.3)).round();
            let published = epoch + Days::new(rng.random_range(0..=3650u64));
            Row {
                views,
                likes,
                dislikes,
                comment,
                published,
                duration_secs: rng.random_range(30..=3600u64),
                category: rng.random_range(0..CATEGORIES.len()),
            }
        })
        .collect();

    let mut present = [false; CATEGORIES.len()];
    for r in &rows {
        present[r.category] = true;
    }
    let rank = |c: usize| present[..c].iter().filter(|&&p| p).count() as f64;
    let linear = |r: &Row| {
        let x = [r.views, r.likes, r.dislikes, r.comment];
        let mut t = LINEAR_INTERCEPT;
        for (w, v) in LINEAR_WEIGHTS.iter().zip(x).take(spec.d_numeric) {
            t += w * v;
        }
        if spec.include_categorical {
            t += CATEGORY_WEIGHT * rank(r.category);
        }
        t
    };
    let normal = Normal::new(0.0, spec.noise_sd).expect("validated noise_sd");

    let header = [
        "vidid", "adview", "views", "likes", "dislikes", "comment", "published", "duration",
        "category",
    ]
    .map(String::from)
    .to_vec();
    let table_rows = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let signal = match spec.kind {
                SyntheticKind::Linear => linear(r),
                SyntheticKind::TreeStructured => tree_rule(r.views, r.likes),
                SyntheticKind::NoisyMixed => 0.5 * linear(r) + 0.5 * tree_rule(r.views, r.likes),
            };
            let target = if spec.noise_sd > 0.0 {
                signal + normal.sample(&mut noise_rng)
            } else {
                signal
            };
            vec![
                format!("VID_{i:05}"),
                target.to_string(),
                r.views.to_string(),
                r.likes.to_string(),
                r.dislikes.to_string(),
                r.comment.to_string(),
                r.published.format("%Y-%m-%d").to_string(),
                iso_duration(r.duration_secs),
                CATEGORIES[r.category].to_string(),
            ]
        })
        .collect();
    Ok(RawTable {
        header,
        rows: table_rows,
        source_name: format!("synthetic-{:?}-{}", spec.kind, spec.seed).to_lowercase(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BestSplit {
    Split {
        feature: usize,
        threshold: f64,
        weighted_mse: f64,
    },
    /// Every feature is constant over the rows.
    NoSplit,
}

fn oracle_midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Sum of squared deviations from the mean, both sums taken in the given order.
pub fn two_pass_sse(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Weighted child MSE `(SSE_left + SSE_right) / n` of a candidate split, with
/// rows kept in their original order on each side.
pub fn split_score(x: ArrayView2<'_, f64>, y: &[f64], feature: usize, threshold: f64) -> f64 {
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (i, &t) in y.iter().enumerate() {
        if x[[i, feature]] <= threshold {
            left.push(t);
        } else {
            right.push(t);
        }
    }
    let sse = |v: &[f64]| if v.is_empty() { 0.0 } else { two_pass_sse(v) };
    (sse(&left) + sse(&right)) / y.len() as f64
}

/// Scores every (feature, midpoint threshold) pair and returns the minimizer,
/// preferring the lowest feature index and then the lowest threshold on ties.
pub fn brute_force_best_split(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<BestSplit, TestkitError> {
    let n = y.len();
    if n == 0 || x.nrows() != n || x.ncols() == 0 {
        return Err(TestkitError::BadInput);
    }
    if n > ORACLE_MAX_ROWS {
        return Err(TestkitError::TooLarge(n));
    }
    let mut best = BestSplit::NoSplit;
    for feature in 0..x.ncols() {
        let mut distinct: Vec<f64> = x.column(feature).to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for pair in distinct.windows(2) {
            let threshold = oracle_midpoint(pair[0], pair[1]);
            let score = split_score(x, y, feature, threshold);
            let better = match best {
                BestSplit::NoSplit => true,
                BestSplit::Split { weighted_mse, .. } => score < weighted_mse,
            };
            if better {
                best = BestSplit::Split {
                    feature,
                    threshold,
                    weighted_mse: score,
                };
            }
        }
    }
    Ok(best)
}

/// Central-difference estimate of d(loss)/d(parameter) for every parameter,
/// in [`AnnModel::parameters`] order.
pub fn finite_difference_gradients(
    model: &AnnModel,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    step: f64,
) -> Vec<f64> {
    assert!(step > 0.0, "step must be positive");
    assert!(!y.is_empty() && x.nrows() == y.len(), "batch must be nonempty");
    let theta = model.parameters();
    let mut probe = model.clone();
    let mut shifted = theta.clone();
    (0..theta.len())
        .map(|p| {
            shifted[p] = theta[p] + step;
            probe.set_parameters(&shifted);
            let up = probe.loss(x, y);
            shifted[p] = theta[p] - step;
            probe.set_parameters(&shifted);
            let down = probe.loss(x, y);
            shifted[p] = theta[p];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
///
/// The floor keeps near-zero gradients from turning rounding noise into a
/// large ratio.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs() / p.abs().max(q.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::AnnConfig;
    use ndarray::array;

    #[test]
    fn synthetic_is_deterministic_and_sized() {
        let spec = SyntheticSpec::new(SyntheticKind::TreeStructured, 100, 7);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.n_rows(), 100);
        assert_eq!(a.header.len(), 9);
        let c = generate_synthetic(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn synthetic_text_forms() {
        let t = generate_synthetic(&SyntheticSpec::new(SyntheticKind::Linear, 50, 1)).unwrap();
        for row in &t.rows {
            assert!(row[0].starts_with("VID_"));
            assert!(row[6].len() == 10 && row[6].as_bytes()[4] == b'-');
            assert!(row[7].starts_with("PT"));
            assert!(CATEGORIES.contains(&row[8].as_str()));
        }
    }

    #[test]
    fn noiseless_linear_target_is_exact() {
        let spec = SyntheticSpec {
            noise_sd: 0.0,
            include_categorical: false,
            d_numeric: 2,
            ..SyntheticSpec::new(SyntheticKind::Linear, 20, 3)
        };
        let t = generate_synthetic(&spec).unwrap();
        for row in &t.rows {
            let v: Vec<f64> = row[1..4].iter().map(|c| c.parse().unwrap()).collect();
            assert_eq!(v[0], 20.0 + 0.002 * v[1] + 0.04 * v[2]);
        }
    }

    #[test]
    fn invalid_specs() {
        let ok = SyntheticSpec::new(SyntheticKind::Linear, 10, 0);
        assert!(generate_synthetic(&SyntheticSpec { n_rows: 1, ..ok.clone() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { d_numeric: 0, ..ok.clone() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { noise_sd: -1.0, ..ok }).is_err());
        assert!("bogus".parse::<SyntheticKind>().is_err());
    }

    #[test]
    fn iso_durations() {
        assert_eq!(iso_duration(30), "PT30S");
        assert_eq!(iso_duration(3600), "PT1H");
        assert_eq!(iso_duration(3661), "PT1H1M1S");
        assert_eq!(iso_duration(120), "PT2M");
    }

    #[test]
    fn oracle_step_dataset() {
        let x = array![[0.0], [0.25], [0.75], [1.0]];
        let best = brute_force_best_split(x.view(), &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            best,
            BestSplit::Split {
                feature: 0,
                threshold: 0.5,
                weighted_mse: 0.0
            }
        );
    }

    #[test]
    fn oracle_constant_feature() {
        let x = array![[2.0], [2.0], [2.0]];
        assert_eq!(
            brute_force_best_split(x.view(), &[1.0, 2.0, 3.0]).unwrap(),
            BestSplit::NoSplit
        );
        let big = ndarray::Array2::<f64>::zeros((65, 1));
        assert_eq!(
            brute_force_best_split(big.view(), &[0.0; 65]),
            Err(TestkitError::TooLarge(65))
        );
    }

    #[test]
    fn finite_differences_match_closed_form_without_hidden_layer() {
        let cfg = AnnConfig {
            hidden_sizes: vec![],
            seed: 4,
            ..AnnConfig::default()
        };
        let model = AnnModel::initialize(2, &cfg).unwrap();
        let x = array![[0.3, -1.2]];
        let y = [0.7];
        let yhat = model.predict(x.view())[0];
        let g = 2.0 * (yhat - y[0]);
        let expected = [g * 0.3, g * -1.2, g];
        let fd = finite_difference_gradients(&model, x.view(), &y, 1e-5);
        assert!(max_relative_error(&fd, &expected, 1e-8) < 1e-8, "{fd:?} vs {expected:?}");
    }

    #[test]
    fn finite_differences_converge_with_step() {
        let cfg = AnnConfig {
            hidden_sizes: vec![3],
            seed: 2,
            ..AnnConfig::default()
        };
        let model = AnnModel::initialize(2, &cfg).unwrap();
        let x = array![[0.2, 0.9], [0.6, 0.1], [0.4, 0.4]];
        let y = [1.0, -1.0, 0.5];
        let a = finite_difference_gradients(&model, x.view(), &y, 1e-3);
        let b = finite_difference_gradients(&model, x.view(), &y, 5e-4);
        let diff = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-5, "{diff}");
    }
}
