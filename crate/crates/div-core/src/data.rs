//! Dataset container and per-column standardization.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DivError, Result};

/// Row-aligned numeric matrices of instrument Z, treatment X, outcome Y and
/// optional exogenous covariates W.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub z: Array2<f64>,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub w: Option<Array2<f64>>,
}

impl Dataset {
    pub fn new(
        z: Array2<f64>,
        x: Array2<f64>,
        y: Array2<f64>,
        w: Option<Array2<f64>>,
    ) -> Result<Self> {
        let n = z.nrows();
        if x.nrows() != n || y.nrows() != n || w.as_ref().map_or(false, |w| w.nrows() != n) {
            return Err(DivError::Shape("dataset: row counts differ".into()));
        }
        let ds = Dataset { z, x, y, w };
        for (name, m) in ds.named_blocks() {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(DivError::Input(format!(
                    "dataset: non-finite value in {name}"
                )));
            }
        }
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    fn named_blocks(&self) -> Vec<(&'static str, ArrayView2<'_, f64>)> {
        let mut v = vec![
            ("Z", self.z.view()),
            ("X", self.x.view()),
            ("Y", self.y.view()),
        ];
        if let Some(w) = &self.w {
            v.push(("W", w.view()));
        }
        v
    }

    /// Error naming the first zero-variance column, if any.
    pub fn check_nondegenerate(&self) -> Result<()> {
        for (name, m) in self.named_blocks() {
            for (j, col) in m.columns().into_iter().enumerate() {
                let mean = col.mean().unwrap_or(0.0);
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (col.len().max(1)) as f64;
                if var == 0.0 {
                    return Err(DivError::Input(format!(
                        "zero-variance column: {name}[{j}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Mean/SD pairs for one variable block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ColStats {
    pub fn fit(m: ArrayView2<f64>) -> Result<Self> {
        let mean = m.mean_axis(Axis(0)).unwrap();
        let n = m.nrows() as f64;
        let sd: Array1<f64> = m
            .columns()
            .into_iter()
            .zip(mean.iter())
            .map(|(col, &mu)| (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        if sd.iter().any(|&s| s <= 0.0) {
            return Err(DivError::Input("standardizer: zero-variance column".into()));
        }
        Ok(ColStats {
            mean: mean.to_vec(),
            sd: sd.to_vec(),
        })
    }

    /// Identity stats (mean 0, sd 1) for `k` columns.
    pub fn identity(k: usize) -> Self {
        ColStats {
            mean: vec![0.0; k],
            sd: vec![1.0; k],
        }
    }

    pub fn standardize(&self, m: ArrayView2<f64>) -> Array2<f64> {
        let mut out = m.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.sd[j]);
        }
        out
    }

    pub fn destandardize(&self, m: ArrayView2<f64>) -> Array2<f64> {
        let mut out = m.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * self.sd[j] + self.mean[j]);
        }
        out
    }
}

/// Standardization parameters for every variable block of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub z: ColStats,
    pub x: ColStats,
    pub y: ColStats,
    pub w: Option<ColStats>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Result<Self> {
        Ok(Standardizer {
            z: ColStats::fit(data.z.view())?,
            x: ColStats::fit(data.x.view())?,
            y: ColStats::fit(data.y.view())?,
            w: match &data.w {
                Some(w) => Some(ColStats::fit(w.view())?),
                None => None,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardize_round_trips() {
        let m = array![[1.0, 10.0], [2.0, 20.0], [3.0, 60.0]];
        let stats = ColStats::fit(m.view()).unwrap();
        let s = stats.standardize(m.view());
        let back = stats.destandardize(s.view());
        let diff = (&back - &m).mapv(f64::abs);
        assert!(diff.iter().all(|&v| v < 1e-12));
        // standardized columns have mean ~0 and sd ~1
        for col in s.columns() {
            let mean = col.mean().unwrap();
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_column_is_rejected() {
        let m = array![[1.0], [1.0], [1.0]];
        assert!(matches!(ColStats::fit(m.view()), Err(DivError::Input(_))));
    }

    #[test]
    fn dataset_names_degenerate_column() {
        let ds = Dataset::new(
            array![[0.0], [1.0]],
            array![[1.0], [2.0]],
            array![[5.0], [5.0]],
            None,
        )
        .unwrap();
        let err = ds.check_nondegenerate().unwrap_err();
        assert!(err.to_string().contains("Y[0]"));
    }
}
