//! Engression baseline: a single generative net for the conditional
//! distribution of Y | X = x, trained with the energy loss. Not an IV
//! method; with confounding its conditional mean differs from the
//! interventional mean.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::ColStats;
use crate::error::{DivError, Result};
use crate::model::FitConfig;
use crate::nn::{value_and_grad, AdamState, Mlp};

/// A fitted engression model (x, eps) -> y-hat.
#[derive(Debug, Clone)]
pub struct EngressionFit {
    net: Mlp,
    noise_dim: usize,
    x_stats: ColStats,
    y_stats: ColStats,
}

/// Train with the engression loss on (X -> Y) pairs, using the same
/// optimizer stack and minibatch schedule as the DIV trainer.
pub fn fit_engression(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    config: &FitConfig,
) -> Result<EngressionFit> {
    if x.nrows() != y.nrows() {
        return Err(DivError::Shape("fit_engression: row counts differ".into()));
    }
    let n = x.nrows();
    if n < 50 {
        return Err(DivError::Input(format!(
            "fit_engression: need at least 50 rows, got {n}"
        )));
    }
    let x_stats = ColStats::fit(x)?;
    let y_stats = match ColStats::fit(y) {
        Ok(s) => s,
        // constant outcome: keep a unit scale so the net can learn the constant
        Err(_) => {
            let mut s = ColStats::identity(y.ncols());
            for (j, col) in y.columns().into_iter().enumerate() {
                s.mean[j] = col.mean().unwrap_or(0.0);
            }
            s
        }
    };
    let x_s = x_stats.standardize(x);
    let y_s = y_stats.standardize(y);

    let noise_dim = config.noise.dim_eps_y;
    let mut dims = vec![x.ncols() + noise_dim];
    dims.extend(std::iter::repeat(config.hidden_width).take(config.hidden_layers - 1));
    dims.push(y.ncols());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Mlp::init(&dims, config.activation, &mut rng)?;
    let mut adam = AdamState::new(&[&net]);

    let full_batch = n <= 1000 || config.batch_size >= n;
    let mut order: Vec<usize> = (0..n).collect();
    let mut pos = usize::MAX;

    for epoch in 1..=config.epochs {
        let idx: Vec<usize> = if full_batch {
            order.clone()
        } else {
            if pos == usize::MAX || pos + config.batch_size > n {
                for i in (1..n).rev() {
                    let j = rng.gen_range(0..=i);
                    order.swap(i, j);
                }
                pos = 0;
            }
            let out = order[pos..pos + config.batch_size].to_vec();
            pos += config.batch_size;
            out
        };
        let b = idx.len();
        let take = |m: &Array2<f64>| {
            let mut out = Array2::zeros((b, m.ncols()));
            for (r, &i) in idx.iter().enumerate() {
                out.row_mut(r).assign(&m.row(i));
            }
            out
        };
        let xb = take(&x_s);
        let yb = take(&y_s);
        let e1 = Array2::from_shape_fn((b, noise_dim), |_| StandardNormal.sample(&mut rng));
        let e2 = Array2::from_shape_fn((b, noise_dim), |_| StandardNormal.sample(&mut rng));

        let bundle = value_and_grad(&[&net], |tape, ms| {
            let xc = tape.constant(xb.view());
            let yc = tape.constant(yb.view());
            let mut draws = Vec::with_capacity(2);
            for e in [&e1, &e2] {
                let ec = tape.constant(e.view());
                let input = tape.concat_cols(&[xc, ec])?;
                draws.push(tape.forward(&ms[0], input));
            }
            let (loss, _, _) = tape.energy_loss(yc, draws[0], draws[1])?;
            Ok(loss)
        })
        .map_err(|e| match e {
            DivError::Numerical(msg) => DivError::Numerical(format!("epoch {epoch}: {msg}")),
            other => other,
        })?;
        adam.step(&mut [&mut net], &bundle, config.lr)?;
    }

    Ok(EngressionFit {
        net,
        noise_dim,
        x_stats,
        y_stats,
    })
}

impl EngressionFit {
    /// Draw `m` conditional samples of Y | X = x per input row.
    pub fn sample<R: Rng>(
        &self,
        x_rows: ArrayView2<f64>,
        m: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        if m < 1 {
            return Err(DivError::Input("sample: m must be >= 1".into()));
        }
        let x_s = self.x_stats.standardize(x_rows);
        let n = x_s.nrows();
        let mut x_rep = Array2::zeros((n * m, x_s.ncols()));
        for i in 0..n {
            for k in 0..m {
                x_rep.row_mut(i * m + k).assign(&x_s.row(i));
            }
        }
        let eps = Array2::from_shape_fn((n * m, self.noise_dim), |_| StandardNormal.sample(rng));
        let input = concatenate(Axis(1), &[x_rep.view(), eps.view()])?;
        let y_s = self.net.forward(input.view())?;
        Ok(self.y_stats.destandardize(y_s.view()))
    }

    /// Monte Carlo conditional mean over `m` noise draws per row.
    pub fn predict_mean<R: Rng>(
        &self,
        x_rows: ArrayView2<f64>,
        m: usize,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let samples = self.sample(x_rows, m, rng)?;
        let n = x_rows.nrows();
        let mut out = Array1::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..m {
                acc += samples[[i * m + k, 0]];
            }
            out[i] = acc / m as f64;
        }
        Ok(out)
    }
}
