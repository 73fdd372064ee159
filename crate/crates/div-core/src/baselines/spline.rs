//! Natural cubic spline basis with interior knots at empirical quantiles.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{DivError, Result};

/// Natural cubic spline basis for one variable: columns are `x` plus the
/// K-2 truncated-cubic terms of the standard natural basis (no intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    pub knots: Array1<f64>,
}

impl SplineBasis {
    /// Knots at the empirical {1/6, ..., 5/6} quantiles of `values`.
    pub fn from_quantiles(values: ArrayView1<f64>) -> Result<Self> {
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let knots: Vec<f64> = (1..=5)
            .map(|k| crate::model::lower_quantile_sorted(&sorted, k as f64 / 6.0))
            .collect();
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DivError::Input(
                "spline: knot sequence not strictly increasing (too many ties)".into(),
            ));
        }
        Ok(SplineBasis {
            knots: Array1::from_vec(knots),
        })
    }

    pub fn num_columns(&self) -> usize {
        self.knots.len() - 1 // 1 linear + (K - 2) cubic terms
    }

    /// Evaluate the basis for each value; rows align with `values`.
    pub fn evaluate(&self, values: ArrayView1<f64>) -> Array2<f64> {
        let kk = self.knots.len();
        let last = self.knots[kk - 1];
        let penult = self.knots[kk - 2];
        let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
        let d = |x: f64, xi: f64| (cube(x - xi) - cube(x - last)) / (last - xi);
        let mut out = Array2::zeros((values.len(), self.num_columns()));
        for (i, &x) in values.iter().enumerate() {
            out[[i, 0]] = x;
            for k in 0..kk - 2 {
                out[[i, k + 1]] = d(x, self.knots[k]) - d(x, penult);
            }
        }
        out
    }
}

/// Per-variable basis expansion: linear uses the raw columns; spline expands
/// each column through its own natural cubic basis.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    Linear { ncols: usize },
    Spline { per_column: Vec<SplineBasis> },
}

impl Basis {
    pub fn fit_linear(m: ArrayView2<f64>) -> Self {
        Basis::Linear { ncols: m.ncols() }
    }

    pub fn fit_spline(m: ArrayView2<f64>) -> Result<Self> {
        let per_column = m
            .columns()
            .into_iter()
            .map(SplineBasis::from_quantiles)
            .collect::<Result<Vec<_>>>()?;
        Ok(Basis::Spline { per_column })
    }

    pub fn num_columns(&self) -> usize {
        match self {
            Basis::Linear { ncols } => *ncols,
            Basis::Spline { per_column } => per_column.iter().map(|b| b.num_columns()).sum(),
        }
    }

    pub fn evaluate(&self, m: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Basis::Linear { ncols } => {
                if m.ncols() != *ncols {
                    return Err(DivError::Shape("basis: column count mismatch".into()));
                }
                Ok(m.to_owned())
            }
            Basis::Spline { per_column } => {
                if m.ncols() != per_column.len() {
                    return Err(DivError::Shape("basis: column count mismatch".into()));
                }
                let parts: Vec<Array2<f64>> = per_column
                    .iter()
                    .zip(m.columns())
                    .map(|(b, col)| b.evaluate(col))
                    .collect();
                let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
                Ok(ndarray::concatenate(ndarray::Axis(1), &views).unwrap())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    #[test]
    fn knots_are_strictly_increasing_quantiles() {
        let v: Array1<f64> = (0..600).map(|i| i as f64 / 100.0).collect();
        let b = SplineBasis::from_quantiles(v.view()).unwrap();
        assert_eq!(b.knots.len(), 5);
        assert!(b.knots.windows(2).into_iter().all(|w| w[1] > w[0]));
    }

    #[test]
    fn basis_contains_linear_term() {
        let v: Array1<f64> = (0..100).map(|i| i as f64).collect();
        let b = SplineBasis::from_quantiles(v.view()).unwrap();
        let m = b.evaluate(v.view());
        for (i, &x) in v.iter().enumerate() {
            assert_eq!(m[[i, 0]], x);
        }
    }

    #[test]
    fn constant_values_are_rejected() {
        let v = Array1::from_elem(50, 3.0);
        assert!(SplineBasis::from_quantiles(v.view()).is_err());
    }
}
