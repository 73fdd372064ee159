//! Reverse-mode gradient tape.
//!
//! The tape covers exactly the computation pattern the training losses need:
//! affine layers, elementwise activations, column concatenation, the
//! straight-through threshold, row-norm means (the energy-loss building block)
//! and scalar linear combinations. Nodes are recorded in topological order, so
//! a single reverse sweep yields exact gradients.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{DivError, Result};
use crate::nn::mlp::{Activation, Mlp};

/// Handle to a matrix-valued node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Option<Var> },
    Activate { x: Var, kind: Activation },
    ConcatCols { parts: Vec<Var> },
    /// Per-column hard threshold with identity (straight-through) gradient.
    HardThreshold { x: Var },
    /// Scalar: mean over rows of the Euclidean distance between paired rows.
    MeanRowNorm { a: Var, b: Var },
    /// Elementwise sum of scaled nodes with equal shapes.
    LinComb { terms: Vec<(Var, f64)> },
    /// Scalar: sum of squared entries.
    SumSquares { x: Var },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// References to one model's parameter leaves on a tape.
pub struct TapeMlp {
    weights: Vec<Var>,
    biases: Vec<Option<Var>>,
    activation: Activation,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Register a non-differentiated input.
    pub fn constant(&mut self, value: ArrayView2<f64>) -> Var {
        self.push(value.to_owned(), Op::Leaf)
    }

    fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Register all parameters of `model` as gradient leaves.
    pub fn register(&mut self, model: &Mlp) -> TapeMlp {
        let mut weights = Vec::with_capacity(model.num_layers());
        let mut biases = Vec::with_capacity(model.num_layers());
        for (w, b) in model.weights().iter().zip(model.biases()) {
            weights.push(self.param(w.clone()));
            biases.push(if model.use_bias() {
                // biases live on the tape as 1 x k rows
                Some(self.param(b.view().insert_axis(Axis(0)).to_owned()))
            } else {
                None
            });
        }
        TapeMlp {
            weights,
            biases,
            activation: model.activation(),
        }
    }

    fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let mut z = self.value(x).dot(&self.value(w).t());
        if let Some(b) = b {
            z += &self.value(b).row(0);
        }
        self.push(z, Op::Affine { x, w, b })
    }

    fn activate(&mut self, x: Var, kind: Activation) -> Var {
        if kind == Activation::Identity {
            return x;
        }
        let z = self.value(x).mapv(|v| kind.apply(v));
        self.push(z, Op::Activate { x, kind })
    }

    /// Forward pass through a registered model; hidden activation, affine output.
    pub fn forward(&mut self, model: &TapeMlp, input: Var) -> Var {
        let last = model.weights.len() - 1;
        let mut h = input;
        for i in 0..model.weights.len() {
            h = self.affine(h, model.weights[i], model.biases[i]);
            if i < last {
                h = self.activate(h, model.activation);
            }
        }
        h
    }

    /// Horizontal concatenation of nodes with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).nrows();
        if parts.iter().any(|&p| self.value(p).nrows() != n) {
            return Err(DivError::Shape("concat_cols: row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).ncols()).sum();
        let mut out = Array2::zeros((n, total));
        let mut c = 0;
        for &p in parts {
            let v = self.value(p);
            let k = v.ncols();
            out.slice_mut(s![.., c..c + k]).assign(v);
            c += k;
        }
        Ok(self.push(out, Op::ConcatCols { parts: parts.to_vec() }))
    }

    /// Straight-through threshold: column j maps to `hi[j]` when above
    /// `thresholds[j]`, else `lo[j]`; gradient passes through unchanged.
    pub fn hard_threshold(
        &mut self,
        x: Var,
        thresholds: Array1<f64>,
        lo: Array1<f64>,
        hi: Array1<f64>,
    ) -> Result<Var> {
        let v = self.value(x);
        if v.ncols() != thresholds.len() || v.ncols() != lo.len() || v.ncols() != hi.len() {
            return Err(DivError::Shape("hard_threshold: column mismatch".into()));
        }
        let mut out = v.clone();
        for mut row in out.rows_mut() {
            for j in 0..row.len() {
                row[j] = if row[j] > thresholds[j] { hi[j] } else { lo[j] };
            }
        }
        Ok(self.push(out, Op::HardThreshold { x }))
    }

    /// Scalar node: `mean_i ||a_i - b_i||` over paired rows.
    pub fn mean_row_norm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return Err(DivError::Shape("mean_row_norm: shape mismatch".into()));
        }
        if va.nrows() == 0 {
            return Err(DivError::Input("mean_row_norm: zero rows".into()));
        }
        let n = va.nrows() as f64;
        let mut total = 0.0;
        for (ra, rb) in va.rows().into_iter().zip(vb.rows()) {
            let d2: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
            total += d2.sqrt();
        }
        let val = Array2::from_elem((1, 1), total / n);
        Ok(self.push(val, Op::MeanRowNorm { a, b }))
    }

    /// Elementwise `sum_k c_k * term_k` over nodes of equal shape.
    pub fn lin_comb(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let shape = self.value(terms[0].0).dim();
        if terms.iter().any(|&(v, _)| self.value(v).dim() != shape) {
            return Err(DivError::Shape("lin_comb: shape mismatch".into()));
        }
        let mut out = Array2::zeros(shape);
        for &(v, c) in terms {
            out.scaled_add(c, self.value(v));
        }
        Ok(self.push(out, Op::LinComb { terms: terms.to_vec() }))
    }

    /// Scalar node: sum of squared entries.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().map(|v| v * v).sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumSquares { x })
    }

    /// Energy loss of paired generator draws against observations:
    /// returns `(loss, s1, s2)` scalar nodes with `loss = s1 - s2/2`.
    pub fn energy_loss(&mut self, observed: Var, gen_a: Var, gen_b: Var) -> Result<(Var, Var, Var)> {
        let s1 = self.mean_row_norm(gen_a, observed)?;
        let s2 = self.mean_row_norm(gen_a, gen_b)?;
        let loss = self.lin_comb(&[(s1, 1.0), (s2, -0.5)])?;
        Ok((loss, s1, s2))
    }

    /// Reverse sweep from a scalar node; returns adjoints for all nodes.
    pub fn backward(&self, loss: Var) -> Result<Vec<Array2<f64>>> {
        let lv = self.value(loss);
        if lv.dim() != (1, 1) {
            return Err(DivError::Shape("backward: loss must be a 1x1 scalar".into()));
        }
        if !lv[[0, 0]].is_finite() {
            return Err(DivError::Numerical(format!(
                "non-finite loss value {}",
                lv[[0, 0]]
            )));
        }
        let mut adj: Vec<Array2<f64>> = self
            .nodes
            .iter()
            .map(|n| Array2::zeros(n.value.dim()))
            .collect();
        adj[loss.0][[0, 0]] = 1.0;

        for id in (0..=loss.0).rev() {
            let g = adj[id].clone();
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    adj[x.0] += &g.dot(wv);
                    adj[w.0] += &g.t().dot(xv);
                    if let Some(b) = b {
                        let db = g.sum_axis(Axis(0));
                        adj[b.0] += &db.insert_axis(Axis(0));
                    }
                }
                Op::Activate { x, kind } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = ndarray::Zip::from(&g)
                        .and(xv)
                        .map_collect(|&go, &xo| go * kind.derivative(xo));
                    adj[x.0] += &dx;
                }
                Op::ConcatCols { parts } => {
                    let mut c = 0;
                    for &p in parts {
                        let k = self.nodes[p.0].value.ncols();
                        let slice = g.slice(s![.., c..c + k]).to_owned();
                        adj[p.0] += &slice;
                        c += k;
                    }
                }
                Op::HardThreshold { x } => {
                    adj[x.0] += &g;
                }
                Op::MeanRowNorm { a, b } => {
                    let gs = g[[0, 0]];
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let n = av.nrows() as f64;
                    let mut da = Array2::zeros(av.dim());
                    for i in 0..av.nrows() {
                        let diff = &av.row(i) - &bv.row(i);
                        let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm > 0.0 {
                            let scale = gs / (n * norm);
                            da.row_mut(i).assign(&(&diff * scale));
                        }
                    }
                    adj[a.0] += &da;
                    adj[b.0] -= &da;
                }
                Op::LinComb { terms } => {
                    for &(v, c) in terms {
                        adj[v.0].scaled_add(c, &g);
                    }
                }
                Op::SumSquares { x } => {
                    let gs = g[[0, 0]];
                    adj[x.0].scaled_add(2.0 * gs, &self.nodes[x.0].value);
                }
            }
        }
        Ok(adj)
    }

    pub(crate) fn model_grads(
        &self,
        adj: &[Array2<f64>],
        model: &TapeMlp,
    ) -> (Vec<Array2<f64>>, Vec<Array1<f64>>) {
        let d_weights = model.weights.iter().map(|v| adj[v.0].clone()).collect();
        let d_biases = model
            .biases
            .iter()
            .zip(&model.weights)
            .map(|(b, w)| match b {
                Some(b) => adj[b.0].row(0).to_owned(),
                None => Array1::zeros(adj[w.0].nrows()),
            })
            .collect();
        (d_weights, d_biases)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_plain_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Mlp::init(&[3, 5, 2], Activation::Softplus, &mut rng).unwrap();
        let x = array![[0.3, -0.1, 2.0], [1.0, 1.0, -1.0]];
        let plain = m.forward(x.view()).unwrap();

        let mut tape = Tape::new();
        let tm = tape.register(&m);
        let xi = tape.constant(x.view());
        let out = tape.forward(&tm, xi);
        let diff = (&plain - tape.value(out)).mapv(f64::abs);
        assert!(diff.iter().all(|&v| v < 1e-14));
    }

    #[test]
    fn straight_through_threshold_passes_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(array![[1.0]]);
        let x = tape.constant(array![[2.0]].view());
        let z = tape.affine(x, w, None); // z = 2
        let t = tape
            .hard_threshold(z, array![0.5], array![0.0], array![1.0])
            .unwrap();
        assert_eq!(tape.value(t)[[0, 0]], 1.0);
        let loss = tape.sum_squares(t);
        let adj = tape.backward(loss).unwrap();
        // d loss/d t = 2*t = 2; straight-through -> d z = 2 -> d w = 2*x = 4
        assert_eq!(adj[w.0][[0, 0]], 4.0);
    }

    #[test]
    fn backward_rejects_nonfinite_loss() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[f64::INFINITY]].view());
        let l = tape.sum_squares(x);
        assert!(matches!(tape.backward(l), Err(DivError::Numerical(_))));
    }
}
