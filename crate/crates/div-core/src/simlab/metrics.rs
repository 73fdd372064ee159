//! Evaluation metrics for simulation runs.

use ndarray::{Array1, ArrayView1};

use crate::error::{DivError, Result};

fn check_same_len(a: ArrayView1<f64>, b: ArrayView1<f64>, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(DivError::Shape(format!(
            "{what}: length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(DivError::Input(format!("{what}: empty input")));
    }
    Ok(())
}

/// Mean squared error between an estimated and true interventional mean
/// function evaluated on a common grid.
pub fn eval_mean_mse(estimated: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    check_same_len(estimated, truth, "eval_mean_mse")?;
    let n = estimated.len() as f64;
    Ok(estimated
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (e - t).powi(2))
        .sum::<f64>()
        / n)
}

/// Root mean squared error across an alpha grid of quantile treatment effects.
pub fn eval_qte_rmse(estimated: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    check_same_len(estimated, truth, "eval_qte_rmse")?;
    let n = estimated.len() as f64;
    Ok((estimated
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (e - t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt())
}

/// Mean absolute error across an alpha grid of quantile treatment effects.
pub fn eval_qte_mae(estimated: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    check_same_len(estimated, truth, "eval_qte_mae")?;
    let n = estimated.len() as f64;
    Ok(estimated
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (e - t).abs())
        .sum::<f64>()
        / n)
}

/// Euclidean distance between an estimated and true linear coefficient vector.
pub fn eval_beta_error(estimated: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    check_same_len(estimated, truth, "eval_beta_error")?;
    Ok(estimated
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (e - t).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Instability of a family of fitted mean functions across environments:
/// the grid average of the sum over ordered pairs (e, e') of the squared
/// discrepancy between the two fits. Lower is more stable; identical fits
/// give exactly zero.
pub fn stability_measure(mean_fns: &[Array1<f64>]) -> Result<f64> {
    if mean_fns.len() < 2 {
        return Err(DivError::Input(
            "stability_measure: need at least two fitted functions".into(),
        ));
    }
    let len = mean_fns[0].len();
    if len == 0 {
        return Err(DivError::Input("stability_measure: empty grid".into()));
    }
    for f in mean_fns {
        if f.len() != len {
            return Err(DivError::Shape(
                "stability_measure: grid length mismatch".into(),
            ));
        }
    }
    let mut total = 0.0;
    for g in 0..len {
        for (e, fe) in mean_fns.iter().enumerate() {
            for (e2, fe2) in mean_fns.iter().enumerate() {
                if e != e2 {
                    total += (fe[g] - fe2[g]).powi(2);
                }
            }
        }
    }
    Ok(total / len as f64)
}

/// Equispaced evaluation grid of `n_points` between the 1% and 99% empirical
/// quantiles of a single treatment column.
pub fn default_grid(x: ArrayView1<f64>, n_points: usize) -> Result<Array1<f64>> {
    if n_points < 2 {
        return Err(DivError::Input("default_grid: need at least 2 points".into()));
    }
    if x.len() < 2 {
        return Err(DivError::Input("default_grid: need at least 2 samples".into()));
    }
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = crate::model::lower_quantile_sorted(&sorted, 0.01);
    let hi = crate::model::lower_quantile_sorted(&sorted, 0.99);
    if !(hi > lo) {
        return Err(DivError::Input(
            "default_grid: degenerate quantile range".into(),
        ));
    }
    let step = (hi - lo) / (n_points - 1) as f64;
    Ok(Array1::from_iter((0..n_points).map(|i| lo + step * i as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_of_identical_functions_is_zero() {
        let a = array![1.0, 2.0, 3.0];
        assert_eq!(eval_mean_mse(a.view(), a.view()).unwrap(), 0.0);
    }

    #[test]
    fn mse_hand_value() {
        let a = array![1.0, 3.0];
        let b = array![0.0, 1.0];
        // ((1)^2 + (2)^2) / 2 = 2.5
        assert_eq!(eval_mean_mse(a.view(), b.view()).unwrap(), 2.5);
    }

    #[test]
    fn qte_rmse_and_mae_hand_values() {
        let a = array![0.0, 0.0];
        let b = array![3.0, 4.0];
        assert!((eval_qte_rmse(a.view(), b.view()).unwrap() - (12.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(eval_qte_mae(a.view(), b.view()).unwrap(), 3.5);
    }

    #[test]
    fn beta_error_is_euclidean() {
        let a = array![1.0, 2.0];
        let b = array![4.0, 6.0];
        assert_eq!(eval_beta_error(a.view(), b.view()).unwrap(), 5.0);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let a = array![1.0];
        let b = array![1.0, 2.0];
        assert!(matches!(
            eval_mean_mse(a.view(), b.view()),
            Err(DivError::Shape(_))
        ));
    }

    #[test]
    fn stability_of_constant_offset_pair() {
        // two functions differing by a constant c give exactly 2 c^2
        let f1 = array![0.0, 1.0, 2.0];
        let c = 1.5;
        let f2 = f1.mapv(|v| v + c);
        let s = stability_measure(&[f1, f2]).unwrap();
        assert!((s - 2.0 * c * c).abs() < 1e-12);
    }

    #[test]
    fn stability_identical_fits_is_zero() {
        let f = array![3.0, -1.0];
        assert_eq!(stability_measure(&[f.clone(), f.clone(), f]).unwrap(), 0.0);
    }

    #[test]
    fn stability_requires_two_fits() {
        assert!(stability_measure(&[array![1.0]]).is_err());
    }

    #[test]
    fn grid_spans_inner_quantile_range() {
        let x = Array1::from_iter((0..1000).map(|i| i as f64));
        let g = default_grid(x.view(), 200).unwrap();
        assert_eq!(g.len(), 200);
        // lower inverse CDF: 1% of 1000 -> index 9, 99% -> index 989
        assert!((g[0] - 9.0).abs() < 1e-12);
        assert!((g[199] - 989.0).abs() < 1e-12);
        let diffs: Vec<f64> = g.windows(2).into_iter().map(|w| w[1] - w[0]).collect();
        assert!(diffs.iter().all(|&d| (d - diffs[0]).abs() < 1e-12));
    }
}
