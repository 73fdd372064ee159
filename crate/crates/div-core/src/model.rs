//! The DIV model: a joint generative model of (X, Y) | Z trained by
//! minimizing the energy loss, with sampling and summary functionals for the
//! interventional distribution of Y under do(X := x).

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardizer};
use crate::error::{DivError, Result};
use crate::nn::{value_and_grad, Activation, AdamState, Mlp, Tape, TapeMlp, Var};

/// Dimensions of the independent and shared noise inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub dim_eps_x: usize,
    pub dim_eps_y: usize,
    pub dim_eps_h: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            dim_eps_x: 50,
            dim_eps_y: 50,
            dim_eps_h: 50,
        }
    }
}

impl NoiseConfig {
    fn validate(&self) -> Result<()> {
        if self.dim_eps_x < 1 || self.dim_eps_y < 1 || self.dim_eps_h < 1 {
            return Err(DivError::Config("noise dims must all be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome model parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeHead {
    /// Full MLP outcome model.
    Mlp,
    /// Single linear layer without bias; coefficients on the treatment
    /// inputs are recoverable via [`DivModel::extract_linear_beta`].
    LinearNoBias,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Number of weight layers per network (4 means dims in-w-w-w-out).
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub lr: f64,
    /// Number of optimizer steps; each step uses one minibatch
    /// (the full sample when n <= 1000).
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub outcome_head: OutcomeHead,
    pub binary_treatment: bool,
    pub activation: Activation,
    pub diagnostics_every: usize,
    /// Number of leading epochs spent pretraining the two networks
    /// separately on observational conditionals (g on x|z, f on y|x) before
    /// joint training; counted within `epochs`. Zero disables the phase.
    ///
    /// Useful for strongly nonlinear causal functions, where joint training
    /// started from random weights settles on an oversmoothed solution: the
    /// pretrained outcome network already carries the nonlinear shape, and
    /// the joint phase (typically run at a smaller `lr`) corrects the
    /// confounded parts.
    pub warm_start_epochs: usize,
    /// Learning rate of the warm-start phase.
    pub warm_lr: f64,
    /// During warm start, replace the outcome targets by instrument-corrected
    /// values: first-stage residuals of x on z are given a coefficient from a
    /// flexible observational regression and subtracted from y, removing the
    /// (post-additive) confounding signal from the pretraining targets.
    /// Ignored when the first stage carries no signal. Only used when
    /// `warm_start_epochs > 0`.
    pub warm_slope_correction: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            hidden_layers: 4,
            hidden_width: 100,
            lr: 1e-3,
            epochs: 10_000,
            batch_size: 256,
            seed: 0,
            noise: NoiseConfig::default(),
            outcome_head: OutcomeHead::Mlp,
            binary_treatment: false,
            activation: Activation::Relu,
            diagnostics_every: 100,
            warm_start_epochs: 0,
            warm_lr: 1e-3,
            warm_slope_correction: true,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(DivError::Config("lr must be > 0".into()));
        }
        if self.epochs < 1 {
            return Err(DivError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(DivError::Config("batch_size must be >= 2".into()));
        }
        if self.hidden_layers < 1 || self.hidden_width < 1 {
            return Err(DivError::Config("hidden layers/width must be >= 1".into()));
        }
        if self.diagnostics_every < 1 {
            return Err(DivError::Config("diagnostics_every must be >= 1".into()));
        }
        if self.warm_start_epochs >= self.epochs {
            return Err(DivError::Config(
                "warm_start_epochs must be < epochs".into(),
            ));
        }
        if self.warm_lr <= 0.0 {
            return Err(DivError::Config("warm_lr must be > 0".into()));
        }
        self.noise.validate()
    }
}

/// One training-trace checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub loss: f64,
    pub s1: f64,
    pub s2: f64,
}

/// Per-checkpoint loss records, plus a parameter snapshot at epoch 100
/// used by the distribution-matching probe.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub snapshot_epoch_100: Option<Box<DivModel>>,
}

/// Dimensions of a fitted model: instrument q, treatment d, outcome p,
/// exogenous covariates l (0 when absent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub q: usize,
    pub d: usize,
    pub p: usize,
    pub l: usize,
}

/// A fitted DIV model. Immutable after fitting; all sampling operations are
/// pure given an explicit rng.
#[derive(Debug, Clone)]
pub struct DivModel {
    pub(crate) g_net: Mlp,
    pub(crate) f_net: Mlp,
    pub(crate) noise: NoiseConfig,
    pub(crate) standardizer: Standardizer,
    pub(crate) outcome_head: OutcomeHead,
    pub(crate) binary_treatment: bool,
    pub(crate) dims: ModelDims,
}

fn draw_normal<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Binary-treatment threshold in standardized coordinates: original-scale
/// values above 0.5 map to standardized 1, others to standardized 0.
pub(crate) struct BinaryThreshold {
    thresholds: Array1<f64>,
    lo: Array1<f64>,
    hi: Array1<f64>,
}

impl BinaryThreshold {
    fn from_stats(stats: &crate::data::ColStats) -> Self {
        let k = stats.mean.len();
        let f = |v: f64, j: usize| (v - stats.mean[j]) / stats.sd[j];
        BinaryThreshold {
            thresholds: (0..k).map(|j| f(0.5, j)).collect(),
            lo: (0..k).map(|j| f(0.0, j)).collect(),
            hi: (0..k).map(|j| f(1.0, j)).collect(),
        }
    }
}

/// Deterministic minibatch scheduler: shuffles a permutation and hands out
/// consecutive index blocks, reshuffling when exhausted.
struct BatchScheduler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    full: bool,
}

impl BatchScheduler {
    fn new(n: usize, batch_size: usize) -> Self {
        let full = n <= 1000 || batch_size >= n;
        BatchScheduler {
            order: (0..n).collect(),
            pos: 0,
            batch: batch_size,
            full,
        }
    }

    fn next_batch<R: Rng>(&mut self, rng: &mut R) -> Vec<usize> {
        if self.full {
            return self.order.clone();
        }
        if self.pos + self.batch > self.order.len() {
            // Fisher-Yates reshuffle
            for i in (1..self.order.len()).rev() {
                let j = rng.gen_range(0..=i);
                self.order.swap(i, j);
            }
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        out
    }
}

fn take_rows(m: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), m.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

/// Fit a DIV model by minimizing the joint energy loss with Adam.
/// Deterministic given `config.seed`.
pub fn fit_div(data: &Dataset, config: &FitConfig) -> Result<(DivModel, TrainTrace)> {
    config.validate()?;
    let n = data.n();
    if n < 50 {
        return Err(DivError::Input(format!(
            "fit_div: need at least 50 rows, got {n}"
        )));
    }
    data.check_nondegenerate()?;

    let standardizer = Standardizer::fit(data)?;
    let z_s = standardizer.z.standardize(data.z.view());
    let x_s = standardizer.x.standardize(data.x.view());
    let y_s = standardizer.y.standardize(data.y.view());
    let w_s = data
        .w
        .as_ref()
        .map(|w| standardizer.w.as_ref().unwrap().standardize(w.view()));

    let dims = ModelDims {
        q: z_s.ncols(),
        d: x_s.ncols(),
        p: y_s.ncols(),
        l: w_s.as_ref().map_or(0, |w| w.ncols()),
    };
    let noise = config.noise;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let g_in = dims.q + dims.l + noise.dim_eps_x + noise.dim_eps_h;
    let f_in = dims.d + dims.l + noise.dim_eps_y + noise.dim_eps_h;
    let mut g_dims = vec![g_in];
    g_dims.extend(std::iter::repeat(config.hidden_width).take(config.hidden_layers - 1));
    g_dims.push(dims.d);
    let mut g_net = Mlp::init(&g_dims, config.activation, &mut rng)?;

    let mut f_net = match config.outcome_head {
        OutcomeHead::Mlp => {
            let mut f_dims = vec![f_in];
            f_dims.extend(std::iter::repeat(config.hidden_width).take(config.hidden_layers - 1));
            f_dims.push(dims.p);
            Mlp::init(&f_dims, config.activation, &mut rng)?
        }
        OutcomeHead::LinearNoBias => {
            Mlp::init_with_bias(&[f_in, dims.p], Activation::Identity, false, &mut rng)?
        }
    };

    let threshold = if config.binary_treatment {
        Some(BinaryThreshold::from_stats(&standardizer.x))
    } else {
        None
    };

    let obs_joint = concatenate![Axis(1), x_s.view(), y_s.view()];

    let mut scheduler = BatchScheduler::new(n, config.batch_size);
    let mut records = Vec::new();
    let mut snapshot: Option<Box<DivModel>> = None;

    // Optional warm start: pretrain g on x|z and f on y|x observationally
    // (energy loss per network), with instrument-corrected outcome targets
    // when requested. The joint phase then starts from these weights.
    if config.warm_start_epochs > 0 {
        let y_warm = if config.warm_slope_correction {
            let corrected = warm_outcome_targets(data.z.view(), data.x.view(), data.y.view())?;
            standardizer.y.standardize(corrected.view())
        } else {
            y_s.clone()
        };

        let mut adam_g = AdamState::new(&[&g_net]);
        let mut adam_f = AdamState::new(&[&f_net]);
        for epoch in 1..=config.warm_start_epochs {
            let idx = scheduler.next_batch(&mut rng);
            let b = idx.len();
            let zb = take_rows(z_s.view(), &idx);
            let xb = take_rows(x_s.view(), &idx);
            let ywb = take_rows(y_warm.view(), &idx);
            let wb = w_s.as_ref().map(|w| take_rows(w.view(), &idx));

            // g step: match the conditional distribution of x given z
            let g_eps = [
                (
                    draw_normal(&mut rng, b, noise.dim_eps_x),
                    draw_normal(&mut rng, b, noise.dim_eps_h),
                ),
                (
                    draw_normal(&mut rng, b, noise.dim_eps_x),
                    draw_normal(&mut rng, b, noise.dim_eps_h),
                ),
            ];
            let threshold_ref = threshold.as_ref();
            let g_bundle = value_and_grad(&[&g_net], |tape, ms| {
                let zc = tape.constant(zb.view());
                let wc = wb.as_ref().map(|w| tape.constant(w.view()));
                let oc = tape.constant(xb.view());
                let mut draws = Vec::with_capacity(2);
                for (ex, eh) in &g_eps {
                    let mut g_in = vec![zc];
                    if let Some(w) = wc {
                        g_in.push(w);
                    }
                    g_in.extend([tape.constant(ex.view()), tape.constant(eh.view())]);
                    let input = tape.concat_cols(&g_in)?;
                    let mut x_hat = tape.forward(&ms[0], input);
                    if let Some(t) = threshold_ref {
                        x_hat = tape.hard_threshold(
                            x_hat,
                            t.thresholds.clone(),
                            t.lo.clone(),
                            t.hi.clone(),
                        )?;
                    }
                    draws.push(x_hat);
                }
                let (loss, _, _) = tape.energy_loss(oc, draws[0], draws[1])?;
                Ok(loss)
            })?;
            adam_g.step(&mut [&mut g_net], &g_bundle, config.warm_lr)?;

            // f step: match the (corrected) conditional distribution of y
            // given the observed x
            let f_eps = [
                (
                    draw_normal(&mut rng, b, noise.dim_eps_y),
                    draw_normal(&mut rng, b, noise.dim_eps_h),
                ),
                (
                    draw_normal(&mut rng, b, noise.dim_eps_y),
                    draw_normal(&mut rng, b, noise.dim_eps_h),
                ),
            ];
            let mut s1s2 = (0.0, 0.0);
            let f_bundle = {
                let s1s2_ref = &mut s1s2;
                value_and_grad(&[&f_net], |tape, ms| {
                    let xc = tape.constant(xb.view());
                    let wc = wb.as_ref().map(|w| tape.constant(w.view()));
                    let oc = tape.constant(ywb.view());
                    let mut draws = Vec::with_capacity(2);
                    for (ey, eh) in &f_eps {
                        let mut f_in = vec![xc];
                        if let Some(w) = wc {
                            f_in.push(w);
                        }
                        f_in.extend([tape.constant(ey.view()), tape.constant(eh.view())]);
                        let input = tape.concat_cols(&f_in)?;
                        draws.push(tape.forward(&ms[0], input));
                    }
                    let (loss, s1, s2) = tape.energy_loss(oc, draws[0], draws[1])?;
                    *s1s2_ref = (tape.scalar(s1), tape.scalar(s2));
                    Ok(loss)
                })?
            };
            adam_f.step(&mut [&mut f_net], &f_bundle, config.warm_lr)?;

            if epoch % config.diagnostics_every == 0 {
                records.push(TraceRecord {
                    epoch,
                    loss: f_bundle.loss,
                    s1: s1s2.0,
                    s2: s1s2.1,
                });
            }
            if epoch == 100.min(config.epochs) && snapshot.is_none() {
                snapshot = Some(Box::new(DivModel {
                    g_net: g_net.clone(),
                    f_net: f_net.clone(),
                    noise,
                    standardizer: standardizer.clone(),
                    outcome_head: config.outcome_head,
                    binary_treatment: config.binary_treatment,
                    dims,
                }));
            }
        }
    }

    let mut adam = AdamState::new(&[&g_net, &f_net]);

    for epoch in (config.warm_start_epochs + 1)..=config.epochs {
        let idx = scheduler.next_batch(&mut rng);
        let b = idx.len();
        let zb = take_rows(z_s.view(), &idx);
        let wb = w_s.as_ref().map(|w| take_rows(w.view(), &idx));
        let ob = take_rows(obs_joint.view(), &idx);

        // two independent noise sets for the two generator draws
        let eps = [
            (
                draw_normal(&mut rng, b, noise.dim_eps_x),
                draw_normal(&mut rng, b, noise.dim_eps_y),
                draw_normal(&mut rng, b, noise.dim_eps_h),
            ),
            (
                draw_normal(&mut rng, b, noise.dim_eps_x),
                draw_normal(&mut rng, b, noise.dim_eps_y),
                draw_normal(&mut rng, b, noise.dim_eps_h),
            ),
        ];

        let mut s1s2 = (0.0, 0.0);
        let bundle = {
            let s1s2_ref = &mut s1s2;
            let threshold = threshold.as_ref();
            let result = value_and_grad(&[&g_net, &f_net], |tape, ms| {
                let zc = tape.constant(zb.view());
                let wc = wb.as_ref().map(|w| tape.constant(w.view()));
                let oc = tape.constant(ob.view());
                let mut draws = Vec::with_capacity(2);
                for (ex, ey, eh) in &eps {
                    let exc = tape.constant(ex.view());
                    let eyc = tape.constant(ey.view());
                    let ehc = tape.constant(eh.view());
                    let d = forward_joint(
                        tape, &ms[0], &ms[1], zc, wc, exc, eyc, ehc, threshold,
                    )?;
                    draws.push(d);
                }
                let (loss, s1, s2) = tape.energy_loss(oc, draws[0], draws[1])?;
                *s1s2_ref = (tape.scalar(s1), tape.scalar(s2));
                Ok(loss)
            });
            match result {
                Ok(b) => b,
                Err(DivError::Numerical(msg)) => {
                    return Err(DivError::Numerical(format!("epoch {epoch}: {msg}")))
                }
                Err(e) => return Err(e),
            }
        };

        adam.step(&mut [&mut g_net, &mut f_net], &bundle, config.lr)?;

        if epoch % config.diagnostics_every == 0 || epoch == config.epochs {
            records.push(TraceRecord {
                epoch,
                loss: bundle.loss,
                s1: s1s2.0,
                s2: s1s2.1,
            });
        }
        if epoch == 100.min(config.epochs) && snapshot.is_none() {
            snapshot = Some(Box::new(DivModel {
                g_net: g_net.clone(),
                f_net: f_net.clone(),
                noise,
                standardizer: standardizer.clone(),
                outcome_head: config.outcome_head,
                binary_treatment: config.binary_treatment,
                dims,
            }));
        }
    }

    let model = DivModel {
        g_net,
        f_net,
        noise,
        standardizer,
        outcome_head: config.outcome_head,
        binary_treatment: config.binary_treatment,
        dims,
    };
    Ok((
        model,
        TrainTrace {
            records,
            snapshot_epoch_100: snapshot,
        },
    ))
}

/// Minimum share of a treatment column's variance the first stage must
/// explain for its residual to enter the warm-start outcome correction.
const WARM_FIRST_STAGE_MIN_R2: f64 = 0.01;

/// Instrument-corrected outcome targets for the warm-start phase, in original
/// scale. First-stage residuals v = x - E[x|z] get a coefficient from an OLS
/// of y on a flexible basis in x plus v; subtracting the fitted v-part strips
/// post-additive confounding from the observational targets so the
/// pretrained outcome network approximates the causal conditional. Columns
/// whose first stage explains (almost) nothing are left uncorrected; if the
/// outcome design is ill-conditioned the targets are returned unchanged.
fn warm_outcome_targets(
    z: ArrayView2<f64>,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    use crate::baselines::lstsq::{solve_lstsq, with_intercept};

    let n = x.nrows();
    let d = x.ncols();
    let (coef, cond) = solve_lstsq(with_intercept(z).view(), x)?;
    if !cond.is_finite() {
        return Ok(y.to_owned());
    }
    let fitted = with_intercept(z).dot(&coef);
    let resid = &x.to_owned() - &fitted;

    // keep residual columns with a non-degenerate first stage
    let mut kept = Vec::new();
    for j in 0..d {
        let xc = x.column(j);
        let mean = xc.mean().unwrap_or(0.0);
        let var_x = xc.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let var_r = resid.column(j).iter().map(|v| v * v).sum::<f64>();
        if var_x > 0.0 && 1.0 - var_r / var_x >= WARM_FIRST_STAGE_MIN_R2 {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Ok(y.to_owned());
    }

    // outcome design: intercept, quintic powers of each treatment column,
    // then the kept residual columns
    let mut design = Array2::ones((n, 1 + 5 * d + kept.len()));
    for j in 0..d {
        for k in 1..=5usize {
            let mut col = design.column_mut(1 + 5 * j + (k - 1));
            for i in 0..n {
                col[i] = x[[i, j]].powi(k as i32);
            }
        }
    }
    for (c, &j) in kept.iter().enumerate() {
        design.column_mut(1 + 5 * d + c).assign(&resid.column(j));
    }

    let (coef, cond) = solve_lstsq(design.view(), y)?;
    if cond > crate::baselines::lstsq::CONDITION_LIMIT {
        return Ok(y.to_owned());
    }
    let gamma = coef.slice(ndarray::s![1 + 5 * d.., ..]);
    let mut out = y.to_owned();
    for (c, &j) in kept.iter().enumerate() {
        for i in 0..n {
            for r in 0..y.ncols() {
                out[[i, r]] -= gamma[[c, r]] * resid[[i, j]];
            }
        }
    }
    Ok(out)
}

/// One generator draw on the tape: x-hat from g, then y-hat from f sharing
/// the eps_H block, concatenated as (x-hat, y-hat) columns.
#[allow(clippy::too_many_arguments)]
pub(crate) fn forward_joint(
    tape: &mut Tape,
    g: &TapeMlp,
    f: &TapeMlp,
    z: Var,
    w: Option<Var>,
    eps_x: Var,
    eps_y: Var,
    eps_h: Var,
    threshold: Option<&BinaryThreshold>,
) -> Result<Var> {
    let mut g_in = vec![z];
    if let Some(w) = w {
        g_in.push(w);
    }
    g_in.extend([eps_x, eps_h]);
    let g_input = tape.concat_cols(&g_in)?;
    let mut x_hat = tape.forward(g, g_input);
    if let Some(t) = threshold {
        x_hat = tape.hard_threshold(x_hat, t.thresholds.clone(), t.lo.clone(), t.hi.clone())?;
    }
    let mut f_in = vec![x_hat];
    if let Some(w) = w {
        f_in.push(w);
    }
    f_in.extend([eps_y, eps_h]);
    let f_input = tape.concat_cols(&f_in)?;
    let y_hat = tape.forward(f, f_input);
    tape.concat_cols(&[x_hat, y_hat])
}

/// Paired joint samples from [`DivModel::generate_joint`], in original scale.
/// Rows are ordered input row first, then sample index (`n * m` rows).
#[derive(Debug, Clone)]
pub struct JointSamples {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl DivModel {
    /// Rebuild a model from its constituent parts (deserialization).
    pub(crate) fn from_parts(
        g_net: Mlp,
        f_net: Mlp,
        noise: NoiseConfig,
        standardizer: Standardizer,
        outcome_head: OutcomeHead,
        binary_treatment: bool,
        dims: ModelDims,
    ) -> Result<Self> {
        let g_in = dims.q + dims.l + noise.dim_eps_x + noise.dim_eps_h;
        let f_in = dims.d + dims.l + noise.dim_eps_y + noise.dim_eps_h;
        if g_net.input_dim() != g_in || g_net.output_dim() != dims.d {
            return Err(DivError::Shape("g_net dims inconsistent with model dims".into()));
        }
        if f_net.input_dim() != f_in || f_net.output_dim() != dims.p {
            return Err(DivError::Shape("f_net dims inconsistent with model dims".into()));
        }
        Ok(DivModel {
            g_net,
            f_net,
            noise,
            standardizer,
            outcome_head,
            binary_treatment,
            dims,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn noise(&self) -> NoiseConfig {
        self.noise
    }

    pub fn outcome_head(&self) -> OutcomeHead {
        self.outcome_head
    }

    pub fn binary_treatment(&self) -> bool {
        self.binary_treatment
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn g_net(&self) -> &Mlp {
        &self.g_net
    }

    pub fn f_net(&self) -> &Mlp {
        &self.f_net
    }

    fn check_w(&self, w_rows: Option<ArrayView2<f64>>, n: usize) -> Result<Option<Array2<f64>>> {
        match (self.dims.l, w_rows) {
            (0, None) => Ok(None),
            (0, Some(_)) => Err(DivError::Shape(
                "model was fitted without W but W rows were given".into(),
            )),
            (_, None) => Err(DivError::Shape(
                "model was fitted with W; W rows are required".into(),
            )),
            (l, Some(w)) => {
                if w.ncols() != l || w.nrows() != n {
                    return Err(DivError::Shape(format!(
                        "W must be {n} x {l}, got {} x {}",
                        w.nrows(),
                        w.ncols()
                    )));
                }
                Ok(Some(self.standardizer.w.as_ref().unwrap().standardize(w)))
            }
        }
    }

    /// Draw `m` paired (X-hat, Y-hat) samples per input row from the fitted
    /// joint distribution of (X, Y) | Z (steps (i)-(iii): draw all noise,
    /// evaluate g, then f on g's output sharing eps_H), in original scale.
    pub fn generate_joint<R: Rng>(
        &self,
        z_rows: ArrayView2<f64>,
        w_rows: Option<ArrayView2<f64>>,
        m: usize,
        rng: &mut R,
    ) -> Result<JointSamples> {
        if m < 1 {
            return Err(DivError::Input("generate_joint: m must be >= 1".into()));
        }
        if z_rows.ncols() != self.dims.q {
            return Err(DivError::Shape(format!(
                "Z must have {} columns, got {}",
                self.dims.q,
                z_rows.ncols()
            )));
        }
        let n = z_rows.nrows();
        let w_s = self.check_w(w_rows, n)?;
        let z_s = self.standardizer.z.standardize(z_rows);

        // replicate each input row m times (row-major: input row, then sample)
        let total = n * m;
        let mut z_rep = Array2::zeros((total, self.dims.q));
        let mut w_rep = w_s.as_ref().map(|w| Array2::zeros((total, w.ncols())));
        for i in 0..n {
            for k in 0..m {
                z_rep.row_mut(i * m + k).assign(&z_s.row(i));
                if let (Some(wr), Some(ws)) = (w_rep.as_mut(), w_s.as_ref()) {
                    wr.row_mut(i * m + k).assign(&ws.row(i));
                }
            }
        }

        let eps_x = draw_normal(rng, total, self.noise.dim_eps_x);
        let eps_y = draw_normal(rng, total, self.noise.dim_eps_y);
        let eps_h = draw_normal(rng, total, self.noise.dim_eps_h);

        let mut g_in = vec![z_rep.view()];
        if let Some(w) = w_rep.as_ref() {
            g_in.push(w.view());
        }
        g_in.push(eps_x.view());
        g_in.push(eps_h.view());
        let mut x_hat = self.g_net.forward(concatenate(Axis(1), &g_in)?.view())?;
        if self.binary_treatment {
            let t = BinaryThreshold::from_stats(&self.standardizer.x);
            for mut row in x_hat.rows_mut() {
                for j in 0..row.len() {
                    row[j] = if row[j] > t.thresholds[j] { t.hi[j] } else { t.lo[j] };
                }
            }
        }

        let mut f_in = vec![x_hat.view()];
        if let Some(w) = w_rep.as_ref() {
            f_in.push(w.view());
        }
        f_in.push(eps_y.view());
        f_in.push(eps_h.view());
        let y_hat = self.f_net.forward(concatenate(Axis(1), &f_in)?.view())?;

        Ok(JointSamples {
            x: self.standardizer.x.destandardize(x_hat.view()),
            y: self.standardizer.y.destandardize(y_hat.view()),
        })
    }

    /// Alias of [`DivModel::generate_joint`]: samples from the fitted joint
    /// observational distribution.
    pub fn sample_observational<R: Rng>(
        &self,
        z_rows: ArrayView2<f64>,
        w_rows: Option<ArrayView2<f64>>,
        m: usize,
        rng: &mut R,
    ) -> Result<JointSamples> {
        self.generate_joint(z_rows, w_rows, m, rng)
    }

    /// Draw `m` outcome samples under do(X := x): X is clamped to `x`,
    /// severing the eps_H path through g; (eps_Y, eps_H) are drawn fresh and
    /// fed to the outcome model. Returns an `m x p` matrix in original scale.
    pub fn sample_interventional<R: Rng>(
        &self,
        x: ArrayView1<f64>,
        w: Option<ArrayView1<f64>>,
        m: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        if m < 1 {
            return Err(DivError::Input(
                "sample_interventional: m must be >= 1".into(),
            ));
        }
        if x.len() != self.dims.d {
            return Err(DivError::Shape(format!(
                "x must have length {}, got {}",
                self.dims.d,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DivError::Input("sample_interventional: non-finite x".into()));
        }
        let x_row = x.insert_axis(Axis(0));
        let x_s = self.standardizer.x.standardize(x_row);
        let w_s = match w {
            Some(w) => self.check_w(Some(w.insert_axis(Axis(0))), 1)?,
            None => self.check_w(None, 1).or_else(|e| match self.dims.l {
                0 => Ok(None),
                _ => Err(e),
            })?,
        };

        let mut x_rep = Array2::zeros((m, self.dims.d));
        for mut row in x_rep.rows_mut() {
            row.assign(&x_s.row(0));
        }
        let w_rep = w_s.map(|w| {
            let mut out = Array2::zeros((m, w.ncols()));
            for mut row in out.rows_mut() {
                row.assign(&w.row(0));
            }
            out
        });

        let eps_y = draw_normal(rng, m, self.noise.dim_eps_y);
        let eps_h = draw_normal(rng, m, self.noise.dim_eps_h);

        let mut f_in = vec![x_rep.view()];
        if let Some(w) = w_rep.as_ref() {
            f_in.push(w.view());
        }
        f_in.push(eps_y.view());
        f_in.push(eps_h.view());
        let y_hat = self.f_net.forward(concatenate(Axis(1), &f_in)?.view())?;
        Ok(self.standardizer.y.destandardize(y_hat.view()))
    }

    /// Monte Carlo interventional mean (default m = 1000).
    pub fn interventional_mean<R: Rng>(
        &self,
        x: ArrayView1<f64>,
        w: Option<ArrayView1<f64>>,
        m: usize,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let samples = self.sample_interventional(x, w, m, rng)?;
        Ok(samples.mean_axis(Axis(0)).unwrap())
    }

    /// Lower inverse-empirical-CDF interventional quantiles: one row per
    /// alpha, one column per outcome. Monotone in alpha for a fixed draw.
    pub fn interventional_quantile<R: Rng>(
        &self,
        x: ArrayView1<f64>,
        w: Option<ArrayView1<f64>>,
        alphas: &[f64],
        m: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        if alphas.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(DivError::Input(
                "interventional_quantile: alphas must be in [0, 1]".into(),
            ));
        }
        let samples = self.sample_interventional(x, w, m, rng)?;
        let mut out = Array2::zeros((alphas.len(), self.dims.p));
        for j in 0..self.dims.p {
            let mut col: Vec<f64> = samples.column(j).to_vec();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (ai, &alpha) in alphas.iter().enumerate() {
                out[[ai, j]] = lower_quantile_sorted(&col, alpha);
            }
        }
        Ok(out)
    }

    /// Quantile treatment effect between `x1` and `x0`: quantile(x1) -
    /// quantile(x0) with both arms sharing the same sub-seeded rng stream.
    pub fn qte<R: Rng>(
        &self,
        x1: ArrayView1<f64>,
        x0: ArrayView1<f64>,
        w: Option<ArrayView1<f64>>,
        alphas: &[f64],
        m: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        let sub_seed: u64 = rng.gen();
        let q1 = self.interventional_quantile(
            x1,
            w,
            alphas,
            m,
            &mut ChaCha8Rng::seed_from_u64(sub_seed),
        )?;
        let q0 = self.interventional_quantile(
            x0,
            w,
            alphas,
            m,
            &mut ChaCha8Rng::seed_from_u64(sub_seed),
        )?;
        Ok(q1 - q0)
    }

    /// Coefficients of the linear outcome head on the treatment inputs,
    /// rescaled to the original data scale. Requires the `linear_no_bias`
    /// head and a scalar outcome.
    pub fn extract_linear_beta(&self) -> Result<Array1<f64>> {
        if self.outcome_head != OutcomeHead::LinearNoBias {
            return Err(DivError::Config(
                "extract_linear_beta: model's outcome head is not linear_no_bias".into(),
            ));
        }
        if self.dims.p != 1 {
            return Err(DivError::Config(
                "extract_linear_beta: scalar outcome required".into(),
            ));
        }
        let w = &self.f_net.weights()[0]; // p x (d + l + noise)
        let sd_y = self.standardizer.y.sd[0];
        let beta = (0..self.dims.d)
            .map(|j| w[[0, j]] * sd_y / self.standardizer.x.sd[j])
            .collect();
        Ok(beta)
    }
}

/// Lower empirical quantile (inf {v : F(v) >= alpha}) of pre-sorted values.
pub fn lower_quantile_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let m = sorted.len();
    debug_assert!(m > 0);
    let k = (alpha * m as f64).ceil() as usize;
    sorted[k.saturating_sub(1).min(m - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn constant_model(c: f64) -> DivModel {
        // f_net ignores inputs: zero weights, bias c (standardized scale).
        let noise = NoiseConfig {
            dim_eps_x: 1,
            dim_eps_y: 1,
            dim_eps_h: 1,
        };
        let g_net = Mlp::from_parts(
            vec![Array2::zeros((1, 3))],
            vec![Array1::zeros(1)],
            Activation::Identity,
            true,
        )
        .unwrap();
        let f_net = Mlp::from_parts(
            vec![Array2::zeros((1, 3))],
            vec![array![c]],
            Activation::Identity,
            true,
        )
        .unwrap();
        DivModel {
            g_net,
            f_net,
            noise,
            standardizer: Standardizer {
                z: crate::data::ColStats::identity(1),
                x: crate::data::ColStats::identity(1),
                y: crate::data::ColStats::identity(1),
                w: None,
            },
            outcome_head: OutcomeHead::Mlp,
            binary_treatment: false,
            dims: ModelDims { q: 1, d: 1, p: 1, l: 0 },
        }
    }

    #[test]
    fn zero_samples_is_an_input_error() {
        let m = constant_model(0.0);
        let z = array![[0.0]];
        assert!(matches!(
            m.generate_joint(z.view(), None, 0, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(DivError::Input(_))
        ));
        assert!(matches!(
            m.sample_interventional(array![0.0].view(), None, 0, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(DivError::Input(_))
        ));
    }

    #[test]
    fn constant_net_generates_constant_outputs() {
        let m = constant_model(4.5);
        let z = array![[1.0], [2.0]];
        let s = m
            .generate_joint(z.view(), None, 3, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(s.y.nrows(), 6);
        assert!(s.y.iter().all(|&v| v == 4.5));
    }

    #[test]
    fn interventional_sample_shape_and_constant_value() {
        let m = constant_model(-1.25);
        let s = m
            .sample_interventional(array![2.0].view(), None, 10, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        assert_eq!(s.dim(), (10, 1));
        assert!(s.iter().all(|&v| v == -1.25));
        let mean = m
            .interventional_mean(array![2.0].view(), None, 100, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        assert_eq!(mean[0], -1.25);
    }

    #[test]
    fn quantile_edges_are_min_and_max() {
        let mut sorted = vec![1.0, 2.0, 3.0, 4.0];
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(lower_quantile_sorted(&sorted, 0.0), 1.0);
        assert_eq!(lower_quantile_sorted(&sorted, 1.0), 4.0);
        assert_eq!(lower_quantile_sorted(&sorted, 0.5), 2.0);
        assert_eq!(lower_quantile_sorted(&sorted, 0.51), 3.0);
    }

    #[test]
    fn constant_quantiles_and_qte() {
        let m = constant_model(2.0);
        let q = m
            .interventional_quantile(
                array![0.0].view(),
                None,
                &[0.1, 0.5, 0.9],
                50,
                &mut ChaCha8Rng::seed_from_u64(1),
            )
            .unwrap();
        assert!(q.iter().all(|&v| v == 2.0));
        let qte = m
            .qte(
                array![1.0].view(),
                array![1.0].view(),
                None,
                &[0.25, 0.5],
                50,
                &mut ChaCha8Rng::seed_from_u64(1),
            )
            .unwrap();
        assert!(qte.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quantile_rejects_bad_alpha() {
        let m = constant_model(0.0);
        assert!(matches!(
            m.interventional_quantile(
                array![0.0].view(),
                None,
                &[1.5],
                10,
                &mut ChaCha8Rng::seed_from_u64(0)
            ),
            Err(DivError::Input(_))
        ));
    }

    #[test]
    fn linear_beta_extraction_rescales_through_standardizer() {
        let mut m = constant_model(0.0);
        m.outcome_head = OutcomeHead::LinearNoBias;
        m.f_net = Mlp::from_parts(
            vec![array![[3.0, 0.5, 0.5]]],
            vec![array![0.0]],
            Activation::Identity,
            false,
        )
        .unwrap();
        // unit scales: raw weight returned unchanged
        let beta = m.extract_linear_beta().unwrap();
        assert_eq!(beta, array![3.0]);
        // non-unit scales: beta * sd_y / sd_x
        m.standardizer.y.sd = vec![2.0];
        m.standardizer.x.sd = vec![4.0];
        let beta = m.extract_linear_beta().unwrap();
        assert_eq!(beta, array![1.5]);

        m.outcome_head = OutcomeHead::Mlp;
        assert!(matches!(
            m.extract_linear_beta(),
            Err(DivError::Config(_))
        ));
    }

    #[test]
    fn zero_head_gives_zero_beta() {
        let mut m = constant_model(0.0);
        m.outcome_head = OutcomeHead::LinearNoBias;
        m.f_net = Mlp::from_parts(
            vec![Array2::zeros((1, 3))],
            vec![Array1::zeros(1)],
            Activation::Identity,
            false,
        )
        .unwrap();
        assert_eq!(m.extract_linear_beta().unwrap(), array![0.0]);
    }
}
