//! ReLU multilayer perceptrons: evaluation and a generalized-Jacobian
//! selection by reverse-mode differentiation.
//!
//! The ReLU derivative at a preactivation of exactly zero is taken as 0, and
//! a neuron counts as active only when its preactivation is strictly
//! positive. Any almost-everywhere selection of the Clarke Jacobian yields the
//! same supremum, so this choice only fixes determinism.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    weights: Matrix,
    bias: Vec<f64>,
    relu_after: bool,
}

impl AffineLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, relu_after: bool) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::InvalidModel(format!(
                "bias length {} does not match {} weight rows",
                bias.len(),
                weights.rows()
            )));
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::InvalidModel(
                "layer has an empty weight matrix".into(),
            ));
        }
        if let Some((r, c)) = weights.find_non_finite() {
            return Err(Error::InvalidModel(format!(
                "weights[{r}][{c}] is not finite"
            )));
        }
        if let Some(i) = bias.iter().position(|b| !b.is_finite()) {
            return Err(Error::InvalidModel(format!("bias[{i}] is not finite")));
        }
        Ok(AffineLayer {
            weights,
            bias,
            relu_after,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn relu_after(&self) -> bool {
        self.relu_after
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `W x + b`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weights.mul_vec(x);
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        z
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }
}

/// A feed-forward stack of affine layers with optional ReLU after each.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<AffineLayer>,
    input_dim: usize,
    output_dim: usize,
}

impl Mlp {
    pub fn new(layers: Vec<AffineLayer>) -> Result<Self> {
        let (first, last) = match (layers.first(), layers.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::InvalidModel("network has no layers".into())),
        };
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::InvalidModel(format!(
                    "layers[{}] outputs {} values but layers[{}] expects {}",
                    i,
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        if last.relu_after {
            return Err(Error::InvalidModel(
                "the final layer must not be followed by a ReLU".into(),
            ));
        }
        Ok(Mlp {
            input_dim: first.in_dim(),
            output_dim: last.out_dim(),
            layers,
        })
    }

    /// Builds `[d0, d1, ..., dL]` with ReLU after every hidden layer and
    /// weights and biases drawn uniformly from `±1/√fan_in`.
    pub fn random<R: Rng + ?Sized>(arch: &[usize], rng: &mut R) -> Result<Self> {
        if arch.len() < 2 || arch.contains(&0) {
            return Err(Error::InvalidModel(format!(
                "architecture {arch:?} needs at least two positive widths"
            )));
        }
        let depth = arch.len() - 1;
        let layers = arch
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                let bias = (0..fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                AffineLayer::new(
                    Matrix::from_row_major(fan_out, fan_in, weights)?,
                    bias,
                    i + 1 < depth,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::new(layers)
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [AffineLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Widths `[input, hidden..., output]`.
    pub fn arch(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(AffineLayer::out_dim))
            .collect()
    }

    pub fn hidden_neurons(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.relu_after)
            .map(AffineLayer::out_dim)
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim,
                found: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<EvalTape> {
        self.check_input(x)?;
        let hidden = self.layers.len() - 1;
        let mut preactivations = Vec::with_capacity(hidden);
        let mut pattern = Vec::with_capacity(self.hidden_neurons());
        let mut a = x.to_vec();
        for layer in &self.layers[..hidden] {
            let z = layer.apply(&a);
            a = if layer.relu_after {
                pattern.extend(z.iter().map(|v| *v > 0.0));
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            preactivations.push(z);
        }
        let output = self.layers[hidden].apply(&a);
        Ok(EvalTape {
            input: x.to_vec(),
            preactivations,
            output,
            pattern,
        })
    }

    /// `f(x)` without keeping the tape.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output)
    }

    /// The backprop selection `W_L · D_{L-1} · W_{L-1} ⋯ D_1 · W_1`, one
    /// reverse pass per output row.
    pub fn clarke_jacobian(&self, tape: &EvalTape) -> Matrix {
        let mut g = Matrix::zeros(self.output_dim, self.input_dim);
        let mut seed = vec![0.0; self.output_dim];
        for k in 0..self.output_dim {
            seed.fill(0.0);
            seed[k] = 1.0;
            let row = self.backprop_row(tape, &seed);
            g.row_mut(k).copy_from_slice(&row);
        }
        g
    }

    /// `vᵀ · J` for a cotangent `v` on the output.
    pub fn vjp(&self, tape: &EvalTape, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.output_dim, "cotangent length");
        self.backprop_row(tape, v)
    }

    fn backprop_row(&self, tape: &EvalTape, seed: &[f64]) -> Vec<f64> {
        let mut delta = seed.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            delta = layer.weights.vec_mul(&delta);
            if i > 0 {
                let below = &self.layers[i - 1];
                if below.relu_after {
                    for (d, z) in delta.iter_mut().zip(&tape.preactivations[i - 1]) {
                        if *z <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
            }
        }
        delta
    }

    pub fn activation_pattern(&self, x: &[f64]) -> Result<Vec<bool>> {
        Ok(self.forward(x)?.pattern)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mlp::from_json_str(&text).map_err(|e| match e {
            Error::InvalidModel(msg) => Error::InvalidModel(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses and validates a model file. Syntax errors report line and
    /// column; structural errors name the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: ModelFile = serde_json::from_str(text).map_err(|e| {
            Error::InvalidModel(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        raw.into_mlp()
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.to_rows(),
                    bias: l.bias.clone(),
                    relu_after: l.relu_after,
                })
                .collect(),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        json::write_file(path, &self.to_model_file())
    }
}

/// On-disk model schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub input_dim: usize,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub relu_after: bool,
}

impl ModelFile {
    pub fn into_mlp(self) -> Result<Mlp> {
        if self.input_dim == 0 {
            return Err(Error::InvalidModel("input_dim must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidModel(
                "layers: at least one layer is required".into(),
            ));
        }
        let mut expected_in = self.input_dim;
        let n = self.layers.len();
        let mut layers = Vec::with_capacity(n);
        for (i, l) in self.layers.into_iter().enumerate() {
            let field = |f: &str| format!("layers[{i}].{f}");
            if l.weights.is_empty() {
                return Err(Error::InvalidModel(format!(
                    "{}: no rows",
                    field("weights")
                )));
            }
            for (r, row) in l.weights.iter().enumerate() {
                if row.len() != expected_in {
                    return Err(Error::InvalidModel(format!(
                        "{}[{r}]: expected {expected_in} entries, found {}",
                        field("weights"),
                        row.len()
                    )));
                }
                if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "{}[{r}][{c}]: not finite",
                        field("weights")
                    )));
                }
            }
            if l.bias.len() != l.weights.len() {
                return Err(Error::InvalidModel(format!(
                    "{}: expected {} entries (one per weight row), found {}",
                    field("bias"),
                    l.weights.len(),
                    l.bias.len()
                )));
            }
            if i + 1 == n && l.relu_after {
                return Err(Error::InvalidModel(format!(
                    "{}: the final layer must be false",
                    field("relu_after")
                )));
            }
            expected_in = l.weights.len();
            let weights = Matrix::from_rows(&l.weights)?;
            layers.push(
                AffineLayer::new(weights, l.bias, l.relu_after)
                    .map_err(|e| Error::InvalidModel(format!("layers[{i}]: {e}")))?,
            );
        }
        Mlp::new(layers)
    }
}

/// Everything recorded by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTape {
    pub input: Vec<f64>,
    /// Preactivations `W x + b` of every layer before the output layer.
    pub preactivations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    /// One bit per ReLU neuron, in layer order: preactivation `> 0`.
    pub pattern: Vec<bool>,
}
