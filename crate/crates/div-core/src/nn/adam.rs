//! Adam optimizer with bias correction.

use ndarray::{Array1, Array2};

use crate::error::{DivError, Result};
use crate::nn::grad::GradBundle;
use crate::nn::mlp::Mlp;

struct Moments {
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
}

/// First/second moment estimates for a set of models.
pub struct AdamState {
    per_model: Vec<Moments>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(models: &[&Mlp]) -> Self {
        Self::with_hyperparams(models, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(models: &[&Mlp], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let per_model = models
            .iter()
            .map(|m| Moments {
                m_weights: m.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
                v_weights: m.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
                m_biases: m.biases().iter().map(|b| Array1::zeros(b.len())).collect(),
                v_biases: m.biases().iter().map(|b| Array1::zeros(b.len())).collect(),
            })
            .collect();
        AdamState {
            per_model,
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    /// One bias-corrected Adam update over all models in the set.
    pub fn step(&mut self, models: &mut [&mut Mlp], grads: &GradBundle, lr: f64) -> Result<()> {
        if lr <= 0.0 {
            return Err(DivError::Config("adam_step: lr must be > 0".into()));
        }
        if models.len() != grads.grads.len() || models.len() != self.per_model.len() {
            return Err(DivError::Shape("adam_step: model count mismatch".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for (mi, model) in models.iter_mut().enumerate() {
            let g = &grads.grads[mi];
            let st = &mut self.per_model[mi];
            if g.d_weights.len() != model.num_layers() {
                return Err(DivError::Shape("adam_step: layer count mismatch".into()));
            }
            for li in 0..model.num_layers() {
                if g.d_weights[li].dim() != model.weights()[li].dim() {
                    return Err(DivError::Shape(format!(
                        "adam_step: weight grad shape mismatch at layer {li}"
                    )));
                }
                update(
                    model.weights_mut()[li].as_slice_mut().unwrap(),
                    g.d_weights[li].as_slice().unwrap(),
                    st.m_weights[li].as_slice_mut().unwrap(),
                    st.v_weights[li].as_slice_mut().unwrap(),
                    self.beta1,
                    self.beta2,
                    self.epsilon,
                    lr,
                    bc1,
                    bc2,
                );
                if model.use_bias() {
                    update(
                        model.biases_mut()[li].as_slice_mut().unwrap(),
                        g.d_biases[li].as_slice().unwrap(),
                        st.m_biases[li].as_slice_mut().unwrap(),
                        st.v_biases[li].as_slice_mut().unwrap(),
                        self.beta1,
                        self.beta2,
                        self.epsilon,
                        lr,
                        bc1,
                        bc2,
                    );
                }
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
