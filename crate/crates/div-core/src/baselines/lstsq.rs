//! Least-squares helpers shared by the classical baselines.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{DivError, Result};

pub const CONDITION_LIMIT: f64 = 1e10;

fn to_na(m: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Minimum-norm least squares via SVD. Returns the coefficient matrix
/// (design columns x response columns) and the design's condition number.
pub fn solve_lstsq(design: ArrayView2<f64>, response: ArrayView2<f64>) -> Result<(Array2<f64>, f64)> {
    if design.nrows() != response.nrows() {
        return Err(DivError::Shape("lstsq: row counts differ".into()));
    }
    let a = to_na(design);
    let b = to_na(response);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let sol = svd
        .solve(&b, smax * 1e-13)
        .map_err(|e| DivError::Numerical(e.to_string()))?;
    let coef = Array2::from_shape_fn((design.ncols(), response.ncols()), |(i, j)| sol[(i, j)]);
    Ok((coef, cond))
}

/// Prepend an all-ones intercept column.
pub fn with_intercept(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::ones((m.nrows(), m.ncols() + 1));
    out.slice_mut(ndarray::s![.., 1..]).assign(&m);
    out
}

/// OLS of each response column on `[1, design]`; returns (intercepts, slopes, cond).
pub fn ols(design: ArrayView2<f64>, response: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>, f64)> {
    let d = with_intercept(design);
    let (coef, cond) = solve_lstsq(d.view(), response)?;
    let intercept = coef.row(0).to_owned();
    let slopes = coef.slice(ndarray::s![1.., ..]).to_owned();
    Ok((intercept, slopes, cond))
}
