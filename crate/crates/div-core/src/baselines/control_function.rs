//! Control-function estimation: regress Y on a treatment basis plus a basis
//! in the first-stage residuals, which absorbs the treatment-correlated part
//! of the hidden confounder.

use ndarray::{Array1, ArrayView2, Axis};

use crate::baselines::lstsq::{solve_lstsq, with_intercept, CONDITION_LIMIT};
use crate::baselines::spline::Basis;
use crate::data::Dataset;
use crate::error::{DivError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfBasis {
    Linear,
    NaturalCubicSpline,
}

/// A fitted control-function model for a scalar outcome.
#[derive(Debug, Clone)]
pub struct CfFit {
    pub basis_kind: CfBasis,
    x_basis: Basis,
    v_basis: Option<Basis>,
    /// Outcome coefficients: intercept, then basis(X), then basis(V).
    pub coefficients: Array1<f64>,
    /// Mean of the residual-basis contribution over training residuals,
    /// used to integrate V out of the interventional mean.
    residual_term_mean: f64,
}

/// Residuals are near-zero when X is deterministic in Z; the residual basis
/// is dropped in that case.
const RESIDUAL_FLOOR: f64 = 1e-10;

pub fn fit_cf(data: &Dataset, basis: CfBasis) -> Result<CfFit> {
    if data.y.ncols() != 1 {
        return Err(DivError::Input("fit_cf: scalar outcome required".into()));
    }
    if basis == CfBasis::NaturalCubicSpline && data.n() < 100 {
        return Err(DivError::Input(
            "fit_cf: spline basis requires n >= 100".into(),
        ));
    }

    // first stage: X on basis(Z), residuals V = X - X-hat
    let z_basis = match basis {
        CfBasis::Linear => Basis::fit_linear(data.z.view()),
        CfBasis::NaturalCubicSpline => Basis::fit_spline(data.z.view())?,
    };
    let zb = with_intercept(z_basis.evaluate(data.z.view())?.view());
    let (fs_coef, fs_cond) = solve_lstsq(zb.view(), data.x.view())?;
    if fs_cond > CONDITION_LIMIT {
        return Err(DivError::DegenerateDesign(format!(
            "first-stage design condition number {fs_cond:.3e}"
        )));
    }
    let residuals = &data.x - &zb.dot(&fs_coef);

    let x_basis = match basis {
        CfBasis::Linear => Basis::fit_linear(data.x.view()),
        CfBasis::NaturalCubicSpline => Basis::fit_spline(data.x.view())?,
    };
    let xb = x_basis.evaluate(data.x.view())?;

    let residual_scale = residuals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let v_basis = if residual_scale < RESIDUAL_FLOOR {
        None
    } else {
        Some(match basis {
            CfBasis::Linear => Basis::fit_linear(residuals.view()),
            CfBasis::NaturalCubicSpline => Basis::fit_spline(residuals.view())?,
        })
    };

    let design = match &v_basis {
        Some(vb) => {
            let vbm = vb.evaluate(residuals.view())?;
            with_intercept(ndarray::concatenate(Axis(1), &[xb.view(), vbm.view()])?.view())
        }
        None => with_intercept(xb.view()),
    };
    let (coef, cond) = solve_lstsq(design.view(), data.y.view())?;
    if cond > CONDITION_LIMIT {
        return Err(DivError::DegenerateDesign(format!(
            "outcome design condition number {cond:.3e}"
        )));
    }
    let coefficients = coef.column(0).to_owned();

    // average the residual-basis term over training residuals
    let residual_term_mean = match &v_basis {
        Some(vb) => {
            let vbm = vb.evaluate(residuals.view())?;
            let start = 1 + x_basis.num_columns();
            let w = coefficients.slice(ndarray::s![start..]);
            vbm.dot(&w).mean().unwrap_or(0.0)
        }
        None => 0.0,
    };

    Ok(CfFit {
        basis_kind: basis,
        x_basis,
        v_basis,
        coefficients,
        residual_term_mean,
    })
}

impl CfFit {
    /// Interventional mean at treatment rows: the treatment-basis term plus
    /// the training-average residual-basis term (V integrated out).
    pub fn predict_mean(&self, x_rows: ArrayView2<f64>) -> Result<Array1<f64>> {
        let xb = self.x_basis.evaluate(x_rows)?;
        let w = self
            .coefficients
            .slice(ndarray::s![1..1 + self.x_basis.num_columns()]);
        let mut out = xb.dot(&w);
        out += self.coefficients[0] + self.residual_term_mean;
        Ok(out)
    }

    pub fn has_residual_basis(&self) -> bool {
        self.v_basis.is_some()
    }
}
