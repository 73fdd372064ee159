//! Registry of simulation data-generating processes with their ground-truth
//! oracles.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{DivError, Result};
use crate::model::lower_quantile_sorted;

/// Floor applied inside log terms so rare negative arguments stay finite.
const LOG_FLOOR: f64 = 1e-6;

/// A named data-generating process. Continuous-treatment scenarios use the
/// treatment model X = Z + H + eps_X; the binary, under-identified and
/// weak-instrument scenarios carry their own treatment models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    ContLinearBinZ,
    ContLinearContZ,
    ContCaseBinZ,
    ContCaseContZ,
    ContSineBinZ,
    ContSineContZ,
    BinaryS1,
    BinaryS2,
    UnderIdentified,
    WeakInstrument { alpha: f64 },
    IllustrativeSoftplus,
    AppendixFLinear,
}

/// A generated sample with the hidden confounder retained in a side channel
/// for debugging; estimators only see the dataset.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub dataset: Dataset,
    pub hidden: Array1<f64>,
}

fn logistic<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    (u / (1.0 - u)).ln()
}

fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

impl Scenario {
    /// Parse a scenario id; `weak_instrument` takes its alpha after a colon,
    /// e.g. `weak_instrument:0`.
    pub fn parse(id: &str) -> Result<Self> {
        if let Some(rest) = id.strip_prefix("weak_instrument") {
            let alpha = match rest.strip_prefix(':') {
                Some(a) => a.parse::<f64>().map_err(|_| {
                    DivError::Config(format!("invalid weak_instrument alpha '{a}'"))
                })?,
                None if rest.is_empty() => 0.0,
                _ => return Err(DivError::Config(format!("unknown scenario '{id}'"))),
            };
            return Ok(Scenario::WeakInstrument { alpha });
        }
        Ok(match id {
            "cont_linear_binZ" => Scenario::ContLinearBinZ,
            "cont_linear_contZ" => Scenario::ContLinearContZ,
            "cont_case_binZ" => Scenario::ContCaseBinZ,
            "cont_case_contZ" => Scenario::ContCaseContZ,
            "cont_sine_binZ" => Scenario::ContSineBinZ,
            "cont_sine_contZ" => Scenario::ContSineContZ,
            "binary_s1" => Scenario::BinaryS1,
            "binary_s2" => Scenario::BinaryS2,
            "under_identified" => Scenario::UnderIdentified,
            "illustrative_softplus" => Scenario::IllustrativeSoftplus,
            "appendix_f_linear" => Scenario::AppendixFLinear,
            _ => return Err(DivError::Config(format!("unknown scenario '{id}'"))),
        })
    }

    pub fn id(&self) -> String {
        match self {
            Scenario::ContLinearBinZ => "cont_linear_binZ".into(),
            Scenario::ContLinearContZ => "cont_linear_contZ".into(),
            Scenario::ContCaseBinZ => "cont_case_binZ".into(),
            Scenario::ContCaseContZ => "cont_case_contZ".into(),
            Scenario::ContSineBinZ => "cont_sine_binZ".into(),
            Scenario::ContSineContZ => "cont_sine_contZ".into(),
            Scenario::BinaryS1 => "binary_s1".into(),
            Scenario::BinaryS2 => "binary_s2".into(),
            Scenario::UnderIdentified => "under_identified".into(),
            Scenario::WeakInstrument { alpha } => format!("weak_instrument:{alpha}"),
            Scenario::IllustrativeSoftplus => "illustrative_softplus".into(),
            Scenario::AppendixFLinear => "appendix_f_linear".into(),
        }
    }

    /// (q, d, p) dimensions.
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            Scenario::UnderIdentified => (1, 2, 1),
            _ => (1, 1, 1),
        }
    }

    pub fn is_binary_treatment(&self) -> bool {
        matches!(self, Scenario::BinaryS1 | Scenario::BinaryS2)
    }

    /// Outcome model f(x, h, eps_y); the interventional oracles marginalize
    /// over the (h, eps_y) pairs drawn by [`Scenario::sample_outcome_noise`].
    fn outcome(&self, x: &[f64], h: f64, eps_y: f64) -> f64 {
        match self {
            Scenario::ContLinearBinZ | Scenario::ContLinearContZ => x[0] - 3.0 * h + eps_y,
            Scenario::ContCaseBinZ | Scenario::ContCaseContZ => {
                if x[0] <= 1.0 {
                    (5.5 + 2.0 * x[0] + 3.0 * h + eps_y) / 5.0
                } else {
                    let arg = (2.0 * x[0] + h).powi(2) + eps_y;
                    arg.max(LOG_FLOOR).ln()
                }
            }
            Scenario::ContSineBinZ | Scenario::ContSineContZ => {
                3.0 * (2.0 * x[0]).sin() + 2.0 * x[0] - 3.0 * h + eps_y
            }
            Scenario::BinaryS1 => softplus(18.0 + 8.0 * x[0] + 6.0 * h),
            Scenario::BinaryS2 => {
                2.0 + (x[0] + 1.0).powi(2) + 3.0 * (x[0] + 1.0) + 2.0 * h + eps_y
            }
            Scenario::UnderIdentified => x[0] + 2.0 * x[1] + 2.0 * h + eps_y,
            Scenario::WeakInstrument { .. } => {
                1.0 / (1.0 + (-(x[0] + 2.0 * h + eps_y) / 3.0).exp())
            }
            Scenario::IllustrativeSoftplus => softplus(x[0] + 2.0 * h + eps_y),
            Scenario::AppendixFLinear => x[0] - 3.0 * h + 0.5 * eps_y,
        }
    }

    /// One (h, eps_y) draw from the scenario's noise distributions.
    fn sample_outcome_noise<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            Scenario::BinaryS1 | Scenario::BinaryS2 => (logistic(rng), logistic(rng)),
            Scenario::WeakInstrument { .. } => {
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }
            Scenario::IllustrativeSoftplus => {
                let h: f64 = StandardNormal.sample(rng);
                (h + 2.0, StandardNormal.sample(rng))
            }
            _ => (StandardNormal.sample(rng), StandardNormal.sample(rng)),
        }
    }

    fn sample_instrument<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Scenario::ContLinearBinZ
            | Scenario::ContCaseBinZ
            | Scenario::ContSineBinZ
            | Scenario::UnderIdentified => {
                if rng.gen_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            }
            Scenario::ContLinearContZ
            | Scenario::ContCaseContZ
            | Scenario::ContSineContZ
            | Scenario::AppendixFLinear => rng.gen_range(0.0..3.0),
            Scenario::BinaryS1 | Scenario::BinaryS2 => logistic(rng),
            Scenario::WeakInstrument { .. } | Scenario::IllustrativeSoftplus => {
                rng.gen_range(-3.0..3.0)
            }
        }
    }

    /// Exact transcription of the named DGP; deterministic given `seed`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<ScenarioData> {
        if n < 1 {
            return Err(DivError::Input("generate_scenario: n must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, d, p) = self.dims();
        let mut z = Array2::zeros((n, q));
        let mut x = Array2::zeros((n, d));
        let mut y = Array2::zeros((n, p));
        let mut hidden = Array1::zeros(n);

        for i in 0..n {
            let zi = self.sample_instrument(&mut rng);
            z[[i, 0]] = zi;
            let (h, eps_y) = self.sample_outcome_noise(&mut rng);
            hidden[i] = h;
            let xi: Vec<f64> = match self {
                Scenario::BinaryS1 | Scenario::BinaryS2 => {
                    let eps_x = logistic(&mut rng);
                    vec![if 4.0 * zi + 4.0 * h > eps_x { 1.0 } else { 0.0 }]
                }
                Scenario::UnderIdentified => {
                    let e1: f64 = StandardNormal.sample(&mut rng);
                    let e2: f64 = StandardNormal.sample(&mut rng);
                    let x1 = zi * (2.0 * h - 0.5 * e1);
                    let x2 = (7.0 + zi + h + e2).max(LOG_FLOOR).ln();
                    vec![x1, x2]
                }
                Scenario::WeakInstrument { alpha } => {
                    let eps_x = rng.gen_range(-1.0..1.0);
                    vec![zi * (alpha + 2.0 * h + eps_x)]
                }
                Scenario::IllustrativeSoftplus => {
                    let eps_x: f64 = StandardNormal.sample(&mut rng);
                    vec![zi + h + 0.1 * eps_x]
                }
                Scenario::AppendixFLinear => {
                    let eps_x: f64 = StandardNormal.sample(&mut rng);
                    vec![zi + h + 0.5 * eps_x]
                }
                _ => {
                    let eps_x: f64 = StandardNormal.sample(&mut rng);
                    vec![zi + h + eps_x]
                }
            };
            for (j, &v) in xi.iter().enumerate() {
                x[[i, j]] = v;
            }
            y[[i, 0]] = self.outcome(&xi, h, eps_y);
        }

        Ok(ScenarioData {
            dataset: Dataset::new(z, x, y, None)?,
            hidden,
        })
    }
}

/// Monte Carlo settings for the scenario oracles.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_mc: 200_000,
            seed: 0,
        }
    }
}

impl OracleConfig {
    fn validate(&self) -> Result<()> {
        if self.n_mc < 10_000 {
            return Err(DivError::Config("oracle n_mc must be >= 10000".into()));
        }
        Ok(())
    }
}

impl Scenario {
    /// True interventional mean on a grid of treatment rows: analytic where
    /// zero-mean noise makes the causal function explicit, Monte Carlo over
    /// (H, eps_Y) elsewhere.
    pub fn oracle_mean(&self, x_grid: ArrayView2<f64>, cfg: &OracleConfig) -> Result<Array1<f64>> {
        cfg.validate()?;
        if x_grid.iter().any(|v| !v.is_finite()) {
            return Err(DivError::Input("oracle_mean: non-finite grid".into()));
        }
        match self {
            Scenario::ContLinearBinZ | Scenario::ContLinearContZ | Scenario::AppendixFLinear => {
                Ok(x_grid.column(0).to_owned())
            }
            Scenario::ContSineBinZ | Scenario::ContSineContZ => Ok(x_grid
                .column(0)
                .mapv(|x| 3.0 * (2.0 * x).sin() + 2.0 * x)),
            Scenario::UnderIdentified => {
                Ok(&x_grid.column(0) + &(&x_grid.column(1) * 2.0))
            }
            Scenario::BinaryS2 => Ok(x_grid
                .column(0)
                .mapv(|x| 2.0 + (x + 1.0).powi(2) + 3.0 * (x + 1.0))),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let draws: Vec<(f64, f64)> = (0..cfg.n_mc)
                    .map(|_| self.sample_outcome_noise(&mut rng))
                    .collect();
                let mut out = Array1::zeros(x_grid.nrows());
                for (i, row) in x_grid.rows().into_iter().enumerate() {
                    let x: Vec<f64> = row.to_vec();
                    let total: f64 = draws
                        .iter()
                        .map(|&(h, e)| self.outcome(&x, h, e))
                        .sum();
                    out[i] = total / cfg.n_mc as f64;
                }
                Ok(out)
            }
        }
    }

    /// Monte Carlo interventional quantiles at a fixed treatment value.
    pub fn oracle_quantile(
        &self,
        x: ArrayView1<f64>,
        alphas: &[f64],
        cfg: &OracleConfig,
    ) -> Result<Array1<f64>> {
        cfg.validate()?;
        if alphas.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(DivError::Input(
                "oracle_quantile: alphas must be in [0, 1]".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let xv: Vec<f64> = x.to_vec();
        let mut values: Vec<f64> = (0..cfg.n_mc)
            .map(|_| {
                let (h, e) = self.sample_outcome_noise(&mut rng);
                self.outcome(&xv, h, e)
            })
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(alphas
            .iter()
            .map(|&a| lower_quantile_sorted(&values, a))
            .collect())
    }

    /// True QTE between x = 1 and x = 0, both arms sharing noise draws.
    pub fn oracle_qte(&self, alphas: &[f64], cfg: &OracleConfig) -> Result<Array1<f64>> {
        cfg.validate()?;
        if alphas.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(DivError::Input("oracle_qte: alphas must be in [0, 1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let draws: Vec<(f64, f64)> = (0..cfg.n_mc)
            .map(|_| self.sample_outcome_noise(&mut rng))
            .collect();
        let arm = |x: f64| -> Vec<f64> {
            let mut v: Vec<f64> = draws
                .iter()
                .map(|&(h, e)| self.outcome(&[x], h, e))
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        };
        let (v1, v0) = (arm(1.0), arm(0.0));
        Ok(alphas
            .iter()
            .map(|&a| lower_quantile_sorted(&v1, a) - lower_quantile_sorted(&v0, a))
            .collect())
    }
}

/// The alpha grid used in the QTE experiments: a non-equidistant sequence
/// between 0.01 and 0.99.
pub const QTE_ALPHAS: [f64; 9] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];
