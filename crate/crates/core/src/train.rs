//! Mean-squared-error training with Adam, enough to produce networks with
//! realistic gradient landscapes for the estimators.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::Mlp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size; `None` trains full-batch.
    pub batch: Option<usize>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Shuffling seed for mini-batches.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            epochs: 500,
            batch: None,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning rate must be finite and nonnegative");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch == Some(0) {
            return bad("batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Gradients {
    fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// Every gradient entry, weights before biases, layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.as_slice().iter().chain(&g.bias).copied())
            .collect()
    }
}

/// `mean_i ‖f(x_i) − y_i‖²` and its parameter gradients by reverse mode,
/// with the same ReLU-at-zero selection as [`Mlp::clarke_jacobian`].
pub fn mse_loss_and_grads(
    net: &Mlp,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, Gradients)> {
    let idx: Vec<usize> = (0..inputs.len()).collect();
    loss_and_grads_at(net, inputs, targets, &idx)
}

fn loss_and_grads_at(
    net: &Mlp,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    batch: &[usize],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "targets per input",
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros_like(net);
    let mut loss = 0.0;
    let layers = net.layers();
    for &i in batch {
        let tape = net.forward(&inputs[i])?;
        let y = &targets[i];
        if y.len() != net.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "target length",
                expected: net.output_dim(),
                found: y.len(),
            });
        }
        let mut delta: Vec<f64> = tape
            .output
            .iter()
            .zip(y)
            .map(|(f, t)| {
                loss += (f - t) * (f - t) * scale;
                2.0 * (f - t) * scale
            })
            .collect();
        for k in (0..layers.len()).rev() {
            let input_k: Vec<f64> = if k == 0 {
                tape.input.clone()
            } else if layers[k - 1].relu_after() {
                tape.preactivations[k - 1]
                    .iter()
                    .map(|z| z.max(0.0))
                    .collect()
            } else {
                tape.preactivations[k - 1].clone()
            };
            let g = &mut grads.layers[k];
            for (r, d) in delta.iter().enumerate() {
                g.bias[r] += d;
                for (w, a) in g.weights.row_mut(r).iter_mut().zip(&input_k) {
                    *w += d * a;
                }
            }
            if k > 0 {
                delta = layers[k].weights().vec_mul(&delta);
                if layers[k - 1].relu_after() {
                    for (d, z) in delta.iter_mut().zip(&tape.preactivations[k - 1]) {
                        if *z <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
            }
        }
    }
    Ok((loss, grads))
}

pub fn mse_loss(net: &Mlp, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let mut loss = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let f = net.eval(x)?;
        loss += f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(loss / inputs.len() as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Mlp,
    /// Training loss of each epoch, measured before that epoch's updates
    /// (the average over its mini-batches when not full-batch).
    pub loss_history: Vec<f64>,
    /// Full-dataset loss after the last update.
    pub final_loss: f64,
}

/// Seeded initial network with ReLU between layers.
pub fn init_mlp(arch: &[usize], seed: u64) -> Result<Mlp> {
    Mlp::random(arch, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Adam with bias correction for `config.epochs` epochs.
pub fn train(net: &Mlp, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot train on an empty dataset".into(),
        ));
    }
    if data.input_dim() != net.input_dim() || data.target_dim() != net.output_dim() {
        return Err(Error::InvalidConfig(format!(
            "dataset is {} -> {} but the network is {} -> {}",
            data.input_dim(),
            data.target_dim(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    let mut net = net.clone();
    let n_params: usize = net
        .layers()
        .iter()
        .map(|l| l.out_dim() * (l.in_dim() + 1))
        .sum();
    let mut adam = Adam::new(n_params, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch_size = config.batch.unwrap_or(data.len()).min(data.len());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if batch_size < data.len() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch_size) {
            let (loss, grads) = loss_and_grads_at(&net, &data.inputs, &data.targets, chunk)?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch, loss });
            }
            epoch_loss += loss;
            batches += 1;
            adam.step(&mut net, &grads);
        }
        history.push(epoch_loss / batches as f64);
    }
    let final_loss = mse_loss(&net, &data.inputs, &data.targets)?;
    if !final_loss.is_finite() {
        return Err(Error::DivergedLoss {
            epoch: config.epochs,
            loss: final_loss,
        });
    }
    Ok(TrainOutcome {
        net,
        loss_history: history,
        final_loss,
    })
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize, config: &TrainConfig) -> Self {
        Adam {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
            let (w, b) = layer.params_mut();
            let params = w.iter_mut().chain(b.iter_mut());
            let gs = g.weights.as_slice().iter().chain(&g.bias);
            for (p, gi) in params.zip(gs) {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                let m_hat = self.m[k] / c1;
                let v_hat = self.v[k] / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}
