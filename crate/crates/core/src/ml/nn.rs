use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Scale, Standardizer};
use crate::error::{Error, Result};

/// Hidden widths of the pair-coalescence networks.
pub const MCPIC_HIDDEN: [usize; 3] = [12, 8, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Logistic,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    Squared,
}

/// Dense network with tanh hidden units and a single output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardNet {
    pub layer_sizes: Vec<usize>,
    /// Row-major `out × in` matrices, one per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub output: Activation,
    pub input_scaler: Standardizer,
    pub output_scale: Scale,
}

impl FeedforwardNet {
    /// Network of the given shape with Xavier-uniform weights and zero
    /// biases.
    pub fn new(input_dim: usize, hidden: &[usize], output: Activation, seed: u64) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            layer_sizes: sizes,
            weights,
            biases,
            output,
            input_scaler: Standardizer::identity(input_dim),
            output_scale: Scale::identity(),
        }
    }

    /// Same shape with every parameter zero.
    pub fn zeros(input_dim: usize, hidden: &[usize], output: Activation) -> Self {
        let mut net = Self::new(input_dim, hidden, output, 0);
        net.weights.iter_mut().flatten().for_each(|w| *w = 0.0);
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn params(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = flat[k];
                k += 1;
            }
        }
    }

    /// Pre-activation of the output unit plus all layer activations, for
    /// already-scaled input.
    fn forward_scaled(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let mut acts = vec![x.to_vec()];
        let last = self.weights.len() - 1;
        let mut z_out = 0.0;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = acts.last().expect("layer input");
            let n_in = self.layer_sizes[l];
            let n_out = self.layer_sizes[l + 1];
            let mut out = vec![0.0; n_out];
            for (o, row) in out.iter_mut().zip(w.chunks(n_in)) {
                *o = row.iter().zip(input).map(|(a, b)| a * b).sum();
            }
            for (o, bb) in out.iter_mut().zip(b) {
                *o += bb;
            }
            if l == last {
                z_out = out[0];
                acts.push(vec![self.activate_output(z_out)]);
            } else {
                out.iter_mut().for_each(|v| *v = v.tanh());
                acts.push(out);
            }
        }
        (z_out, acts)
    }

    fn activate_output(&self, z: f64) -> f64 {
        match self.output {
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Output in the scaled target space (probability for classifiers).
    fn raw(&self, features: &[f64]) -> f64 {
        let x = self.input_scaler.apply(features);
        let (_, acts) = self.forward_scaled(&x);
        acts.last().expect("output")[0]
    }

    fn sample_loss(&self, x_scaled: &[f64], label: f64, loss: Loss) -> f64 {
        let (z, acts) = self.forward_scaled(x_scaled);
        let out = acts.last().expect("output")[0];
        match loss {
            Loss::CrossEntropy => {
                // log-sum-exp form keeps large logits finite
                let softplus = |v: f64| v.max(0.0) + (-v.abs()).exp().ln_1p();
                label * softplus(-z) + (1.0 - label) * softplus(z)
            }
            Loss::Squared => 0.5 * (out - label).powi(2),
        }
    }

    /// Mean loss over pre-scaled samples.
    pub fn mean_loss(&self, data: &[(Vec<f64>, f64)], loss: Loss) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        data.iter().map(|(x, y)| self.sample_loss(x, *y, loss)).sum::<f64>() / data.len() as f64
    }

    /// Mean loss and its gradient (flattened like [`Self::params`]) over
    /// pre-scaled samples.
    pub fn loss_gradient(&self, batch: &[(Vec<f64>, f64)], loss: Loss) -> (f64, Vec<f64>) {
        let mut grad_w: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut total = 0.0;
        let n_layers = self.weights.len();
        for (x, y) in batch {
            total += self.sample_loss(x, *y, loss);
            let (_, acts) = self.forward_scaled(x);
            let out = acts[n_layers][0];
            let d_out = match (loss, self.output) {
                (Loss::CrossEntropy, Activation::Logistic) => out - y,
                (Loss::CrossEntropy, Activation::Identity) => {
                    // cross-entropy on a logit output
                    1.0 / (1.0 + (-out).exp()) - y
                }
                (Loss::Squared, Activation::Identity) => out - y,
                (Loss::Squared, Activation::Logistic) => (out - y) * out * (1.0 - out),
            };
            let mut delta = vec![d_out];
            for l in (0..n_layers).rev() {
                let n_in = self.layer_sizes[l];
                let input = &acts[l];
                for (o, d) in delta.iter().enumerate() {
                    grad_b[l][o] += d;
                    let row = &mut grad_w[l][o * n_in..(o + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if l > 0 {
                    let mut next = vec![0.0; n_in];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                        for (nx, w) in next.iter_mut().zip(row) {
                            *nx += d * w;
                        }
                    }
                    for (nx, a) in next.iter_mut().zip(input) {
                        *nx *= 1.0 - a * a;
                    }
                    delta = next;
                }
            }
        }
        let n = batch.len().max(1) as f64;
        let grad = grad_w
            .iter()
            .zip(&grad_b)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).map(|g| g / n))
            .collect();
        (total / n, grad)
    }
}

/// Evaluates the network on raw features. Classifiers return a
/// probability, regressors a value in target units.
pub fn nn_forward(net: &FeedforwardNet, features: &[f64]) -> Result<f64> {
    if features.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: features.len(),
        });
    }
    let raw = net.raw(features);
    Ok(match net.output {
        Activation::Logistic => raw,
        Activation::Identity => net.output_scale.inverse(raw),
    })
}

/// Mini-batch gradient descent with momentum and early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub patience: usize,
    /// Fraction held out for early stopping; skipped for tiny datasets.
    pub validation_fraction: f64,
    pub seed: u64,
    /// Fit input/target standardization before training.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            patience: 25,
            validation_fraction: 0.1,
            seed: 0,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss before training and after every epoch run.
    pub loss_curve: Vec<f64>,
    pub validation_curve: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Trains `net` in place on raw `(features, label)` pairs.
pub fn nn_train(
    net: &mut FeedforwardNet,
    dataset: &[(Vec<f64>, f64)],
    loss: Loss,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if let Some((x, _)) = dataset.iter().find(|(x, _)| x.len() != net.input_dim()) {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: x.len(),
        });
    }
    if loss == Loss::CrossEntropy && dataset.iter().any(|(_, y)| *y != 0.0 && *y != 1.0) {
        return Err(Error::InvalidArgument("cross-entropy labels must be 0 or 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if dataset.len() >= 20 {
        ((dataset.len() as f64) * config.validation_fraction).round() as usize
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);

    if config.standardize {
        net.input_scaler = Standardizer::fit(train_idx.iter().map(|&i| dataset[i].0.as_slice()));
        if net.output == Activation::Identity {
            let ys: Vec<f64> = train_idx.iter().map(|&i| dataset[i].1).collect();
            net.output_scale = Scale::fit(&ys);
        }
    }
    let prepare = |idx: &[usize]| -> Vec<(Vec<f64>, f64)> {
        idx.iter()
            .map(|&i| {
                let (x, y) = &dataset[i];
                let label = match net.output {
                    Activation::Identity => net.output_scale.forward(*y),
                    Activation::Logistic => *y,
                };
                (net.input_scaler.apply(x), label)
            })
            .collect()
    };
    let mut train = prepare(train_idx);
    let val = prepare(val_idx);

    let initial = net.mean_loss(&train, loss);
    if !initial.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut report = TrainReport {
        loss_curve: vec![initial],
        validation_curve: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let monitor = |net: &FeedforwardNet, train: &[(Vec<f64>, f64)]| {
        if val.is_empty() {
            net.mean_loss(train, loss)
        } else {
            net.mean_loss(&val, loss)
        }
    };
    let mut best_params = net.params();
    let mut best_score = monitor(net, &train);
    report.validation_curve.push(best_score);
    let mut velocity = vec![0.0; best_params.len()];
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(config.batch_size.max(1)) {
            let (_, grad) = net.loss_gradient(batch, loss);
            let mut params = net.params();
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
            net.set_params(&params);
        }
        let epoch_loss = net.mean_loss(&train, loss);
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        report.loss_curve.push(epoch_loss);
        let score = monitor(net, &train);
        report.validation_curve.push(score);
        if score < best_score {
            best_score = score;
            best_params = net.params();
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    net.set_params(&best_params);
    let final_loss = net.mean_loss(&train, loss);
    report.loss_curve.push(final_loss);
    Ok(report)
}
