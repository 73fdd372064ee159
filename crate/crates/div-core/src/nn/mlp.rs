//! Multilayer perceptron parameters and plain (non-differentiable) forward evaluation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DivError, Result};

/// Hidden-layer activation. The output layer is always affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softplus,
    Identity,
}

impl Activation {
    pub(crate) fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Softplus => softplus(v),
            Activation::Identity => v,
        }
    }

    /// Derivative with respect to the pre-activation value.
    pub(crate) fn derivative(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(v),
            Activation::Identity => 1.0,
        }
    }
}

pub(crate) fn softplus(v: f64) -> f64 {
    // numerically stable log(1 + e^v)
    if v > 30.0 {
        v
    } else if v < -30.0 {
        v.exp()
    } else {
        v.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// A dense feed-forward network with weights of shape `(out, in)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
    use_bias: bool,
}

impl Mlp {
    /// Initialize with weights uniform on `[-s, s]`, `s = sqrt(1/fan_in)`, and zero biases.
    pub fn init<R: Rng>(layer_dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        Self::init_with_bias(layer_dims, activation, true, rng)
    }

    /// Same as [`Mlp::init`] but allows disabling biases (used by the linear outcome head).
    pub fn init_with_bias<R: Rng>(
        layer_dims: &[usize],
        activation: Activation,
        use_bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(DivError::Config(format!(
                "need at least 2 layer dims (input and output), got {}",
                layer_dims.len()
            )));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(DivError::Config("layer dims must all be >= 1".into()));
        }
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let s = (1.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-s..=s));
            weights.push(w);
            // biases drawn from the same range as the weights so the hidden
            // units' kinks start spread out instead of all at the origin
            let b = if use_bias {
                Array1::from_shape_fn(fan_out, |_| rng.gen_range(-s..=s))
            } else {
                Array1::zeros(fan_out)
            };
            biases.push(b);
        }
        Ok(Mlp {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
            use_bias,
        })
    }

    /// Build from explicit parameter arrays (deserialization and tests).
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        activation: Activation,
        use_bias: bool,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(DivError::Config(
                "weights and biases must be non-empty and of equal length".into(),
            ));
        }
        let mut layer_dims = vec![weights[0].ncols()];
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != layer_dims[i] {
                return Err(DivError::Shape(format!(
                    "layer {i}: weight input dim {} != previous output dim {}",
                    w.ncols(),
                    layer_dims[i]
                )));
            }
            if b.len() != w.nrows() {
                return Err(DivError::Shape(format!(
                    "layer {i}: bias len {} != weight output dim {}",
                    b.len(),
                    w.nrows()
                )));
            }
            layer_dims.push(w.nrows());
        }
        Ok(Mlp {
            layer_dims,
            weights,
            biases,
            activation,
            use_bias,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn use_bias(&self) -> bool {
        self.use_bias
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    /// Row-wise forward pass: `inputs` is `n x input_dim`, output is `n x output_dim`.
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(DivError::Shape(format!(
                "input has {} columns, model expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(DivError::Input("non-finite value in forward input".into()));
        }
        let mut h = inputs.to_owned();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(&w.t());
            if self.use_bias {
                z += &b.view().insert_axis(Axis(0));
            }
            if i < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Total number of scalar parameters (weights plus biases when enabled).
    pub fn param_count(&self) -> usize {
        let w: usize = self.weights.iter().map(|w| w.len()).sum();
        let b: usize = if self.use_bias {
            self.biases.iter().map(|b| b.len()).sum()
        } else {
            0
        };
        w + b
    }
}
