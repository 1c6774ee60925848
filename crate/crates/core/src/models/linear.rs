//! Ordinary least squares through the normal equations.

use ndarray::{Array1, Array2, ArrayView2};

use super::{check_training_data, ModelError};

/// Ridge added to the feature block of the Gram matrix when it is singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// A Cholesky pivot smaller than this fraction of its diagonal entry means the
/// column is (numerically) a combination of the preceding ones.
const COLLINEAR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// True when the ridge fallback was needed.
    pub regularized: bool,
}

impl LinearModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(&self.weights)
                    .fold(self.intercept, |acc, (v, w)| acc + v * w)
            })
            .collect()
    }

    pub fn sum_squared_residuals(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> f64 {
        self.predict(x)
            .iter()
            .zip(y)
            .map(|(p, t)| (p - t).powi(2))
            .sum()
    }
}

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` if some
/// pivot is not above `tolerance` times its diagonal entry.
fn cholesky(a: &Array2<f64>, tolerance: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut pivot = a[[j, j]];
        for k in 0..j {
            pivot -= l[[j, k]] * l[[j, k]];
        }
        if !(pivot > tolerance * a[[j, j]].abs() && pivot > 0.0) {
            return None;
        }
        let d = pivot.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut z = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Least-squares fit of `y ≈ X w + b`.
///
/// Solves `AᵀA θ = Aᵀy` for the intercept-augmented matrix `A = [1 | X]`. A
/// singular Gram matrix gets `RIDGE_FALLBACK` added to its feature diagonal and
/// the model is flagged as regularized.
pub fn fit_linear(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<LinearModel, ModelError> {
    check_training_data(&x, y)?;
    let (n, d) = x.dim();
    let mut a = Array2::<f64>::ones((n, d + 1));
    a.slice_mut(ndarray::s![.., 1..]).assign(&x);
    let gram = a.t().dot(&a);
    let rhs = a.t().dot(&Array1::from(y.to_vec()));

    let (factor, regularized) = match cholesky(&gram, COLLINEAR_TOLERANCE) {
        Some(l) => (l, false),
        None => {
            let mut ridged = gram.clone();
            for j in 1..=d {
                ridged[[j, j]] += RIDGE_FALLBACK;
            }
            let l = cholesky(&ridged, 0.0).ok_or_else(|| {
                ModelError::InvalidConfig("Gram matrix is singular even after ridge".into())
            })?;
            (l, true)
        }
    };
    let theta = cholesky_solve(&factor, &rhs);
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidConfig(
            "least-squares solution is not finite".into(),
        ));
    }
    Ok(LinearModel {
        intercept: theta[0],
        weights: theta.iter().skip(1).copied().collect(),
        regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_line() {
        let x = array![[0.0], [1.0], [2.0]];
        let m = fit_linear(x.view(), &[1.0, 3.0, 5.0]).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-8);
        assert!((m.intercept - 1.0).abs() < 1e-8);
        assert!(!m.regularized);
    }

    #[test]
    fn constant_target() {
        let x = array![[0.0], [1.0], [2.0]];
        let m = fit_linear(x.view(), &[4.0, 4.0, 4.0]).unwrap();
        assert!(m.weights[0].abs() < 1e-10);
        assert!((m.intercept - 4.0).abs() < 1e-10);
    }

    #[test]
    fn duplicated_column_uses_ridge() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let m = fit_linear(x.view(), &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!(m.regularized);
        assert!(m.weights.iter().all(|w| w.is_finite()));
        assert!((m.weights[0] + m.weights[1] - 2.0).abs() < 1e-6);
        let fitted = m.predict(x.view());
        assert!((fitted[3] - 7.0).abs() < 1e-6);
    }

    #[test]
    fn constant_feature_column_is_regularized() {
        let x = array![[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]];
        let m = fit_linear(x.view(), &[2.0, 4.0, 6.0]).unwrap();
        assert!(m.regularized);
        assert!(m.weights[0].abs() < 1e-6);
        assert!((m.weights[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn empty_is_error() {
        let x = Array2::<f64>::zeros((0, 2));
        assert_eq!(fit_linear(x.view(), &[]), Err(ModelError::EmptyData));
    }

    #[test]
    fn single_row_is_finite() {
        let x = array![[3.0, 1.0]];
        let m = fit_linear(x.view(), &[5.0]).unwrap();
        assert!(m.regularized);
        assert!((m.predict(x.view())[0] - 5.0).abs() < 1e-6);
    }
}
