//! Linear hypothesis, squared-error loss, analytic gradient, and the
//! proximal closed form for least squares.
//!
//! All operations are pure functions over small dense matrices; solves go
//! through a symmetric positive-definite factorization where one is
//! guaranteed and through an SVD otherwise.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::synth::LocalDataset;
use crate::tree::WeightedSample;
use crate::{Error, Result};

/// Parameter vector of a personalized linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weights: DVector<f64>,
}

impl LinearParams {
    pub fn new(weights: DVector<f64>) -> Self {
        debug_assert!(weights.iter().all(|w| w.is_finite()));
        LinearParams { weights }
    }

    pub fn zeros(dim: usize) -> Self {
        LinearParams {
            weights: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Inner product with one feature vector.
    pub fn predict(&self, features: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), features.len())?;
        Ok(self.weights.dot(features))
    }

    /// Predictions for every row of a feature matrix.
    pub fn predict_matrix(&self, features: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), features.ncols())?;
        Ok(features * &self.weights)
    }

    /// Inner product with a feature slice; lengths must match.
    pub fn predict_slice(&self, features: &[f64]) -> f64 {
        assert_eq!(self.dim(), features.len(), "feature length mismatch");
        self.weights.iter().zip(features).map(|(w, x)| w * x).sum()
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimMismatch { expected, got })
    }
}

/// Mean squared residual of the linear model on one dataset.
pub fn squared_loss(params: &LinearParams, data: &LocalDataset) -> Result<f64> {
    check_dim(params.dim(), data.dim())?;
    let resid = &data.labels - &data.features * &params.weights;
    Ok(resid.norm_squared() / data.len() as f64)
}

/// Analytic gradient `(-2/m) X^T (y - X w)` of [`squared_loss`].
pub fn loss_gradient(params: &LinearParams, data: &LocalDataset) -> Result<DVector<f64>> {
    check_dim(params.dim(), data.dim())?;
    let resid = &data.labels - &data.features * &params.weights;
    Ok(data.features.transpose() * resid * (-2.0 / data.len() as f64))
}

/// Minimizer of `loss_weight * L(w) + ||w - anchor||^2` for the squared
/// loss on `data`.
///
/// The first-order condition is the linear system
/// `((2 lw / m) X^T X + 2 I) w = (2 lw / m) X^T y + 2 anchor`, whose matrix
/// is positive definite for every `loss_weight >= 0`, so a Cholesky solve
/// is exact and deterministic.
pub fn proximal_least_squares(
    anchor: &LinearParams,
    data: &LocalDataset,
    loss_weight: f64,
) -> Result<LinearParams> {
    check_dim(anchor.dim(), data.dim())?;
    if !(loss_weight > 0.0) {
        return Err(Error::Config("loss_weight must be positive".into()));
    }
    let d = data.dim();
    let scale = 2.0 * loss_weight / data.len() as f64;
    let mut a = data.features.transpose() * &data.features * scale;
    for i in 0..d {
        a[(i, i)] += 2.0;
    }
    let b = data.features.transpose() * &data.labels * scale + 2.0 * &anchor.weights;
    let chol = Cholesky::new(a).ok_or(Error::Numeric("proximal system not positive definite"))?;
    Ok(LinearParams::new(chol.solve(&b)))
}

/// Minimum-norm least-squares solution of `X w = y`.
///
/// Uses an SVD with singular values below a scale-relative threshold
/// treated as zero, so rank-deficient systems (more columns than rows)
/// yield the minimum-norm interpolant.
pub fn least_squares_min_norm(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::Empty("least-squares design matrix"));
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * x.nrows().max(x.ncols()) as f64 * f64::EPSILON;
    svd.solve(y, eps)
        .map_err(|_| Error::Numeric("svd solve failed"))
}

/// Weighted least squares over weighted sample rows, solved as ordinary
/// least squares on sqrt-weight scaled rows.
pub fn weighted_least_squares(rows: &[WeightedSample]) -> Result<LinearParams> {
    if rows.is_empty() {
        return Err(Error::Empty("weighted least-squares sample set"));
    }
    let dim = rows[0].features.len();
    let mut x = DMatrix::zeros(rows.len(), dim);
    let mut y = DVector::zeros(rows.len());
    for (r, sample) in rows.iter().enumerate() {
        if sample.features.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: sample.features.len(),
            });
        }
        if !(sample.weight >= 0.0) {
            return Err(Error::Config("sample weights must be nonnegative".into()));
        }
        let s = sample.weight.sqrt();
        for j in 0..dim {
            x[(r, j)] = s * sample.features[j];
        }
        y[r] = s * sample.label;
    }
    Ok(LinearParams::new(least_squares_min_norm(&x, &y)?))
}

/// Ridge-regularized local fit, `argmin L(w) + lambda ||w||^2`.
pub fn ridge_least_squares(data: &LocalDataset, lambda: f64) -> Result<LinearParams> {
    if !(lambda > 0.0) {
        return Err(Error::Config("ridge lambda must be positive".into()));
    }
    let d = data.dim();
    let m = data.len() as f64;
    let mut a = data.features.transpose() * &data.features / m;
    for i in 0..d {
        a[(i, i)] += lambda;
    }
    let b = data.features.transpose() * &data.labels / m;
    let chol = Cholesky::new(a).ok_or(Error::Numeric("ridge system not positive definite"))?;
    Ok(LinearParams::new(chol.solve(&b)))
}
