//! Feed-forward ReLU network trained with Adam on standardized data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::Standardizer;
use super::{HyperParams, PredictorError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpParams {
    pub layers: usize,
    pub hidden_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    /// L2 penalty on weights.
    pub alpha: f64,
    pub validation_fraction: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            layers: 1,
            hidden_units: 64,
            epochs: 40,
            learning_rate: 1e-3,
            batch_size: 64,
            patience: 5,
            alpha: 1e-4,
            validation_fraction: 0.1,
        }
    }
}

impl MlpParams {
    pub fn from_hp(hp: &HyperParams) -> Self {
        let d = Self::default();
        Self {
            layers: hp.get_or("layers", d.layers as f64) as usize,
            hidden_units: hp.get_or("hidden_units", d.hidden_units as f64) as usize,
            epochs: hp.get_or("epochs", d.epochs as f64) as usize,
            learning_rate: hp.get_or("learning_rate", d.learning_rate),
            batch_size: hp.get_or("batch_size", d.batch_size as f64) as usize,
            patience: hp.get_or("patience", d.patience as f64) as usize,
            alpha: hp.get_or("alpha", d.alpha),
            validation_fraction: hp.get_or("validation_fraction", d.validation_fraction),
        }
    }
}

/// Layer widths `[input, hidden…, 1]` and a flat parameter vector holding,
/// per layer, a row-major `out × in` weight block followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
}

impl Network {
    pub fn n_params(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn init(widths: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        let mut params = Vec::with_capacity(Self::n_params(&widths));
        for w in widths.windows(2) {
            let bound = (6.0 / w[0].max(1) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self { widths, params }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        forward_with(&self.widths, &self.params, x, &mut Vec::new())
    }
}

/// Forward pass; `acts` receives every layer's post-activation output.
fn forward_with(widths: &[usize], params: &[f64], x: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
    acts.clear();
    acts.push(x.to_vec());
    let mut off = 0;
    let last = widths.len() - 2;
    for (l, w) in widths.windows(2).enumerate() {
        let (nin, nout) = (w[0], w[1]);
        let weights = &params[off..off + nin * nout];
        let bias = &params[off + nin * nout..off + nin * nout + nout];
        let input = &acts[l];
        let mut out = vec![0.0; nout];
        for o in 0..nout {
            let row = &weights[o * nin..(o + 1) * nin];
            let mut z = bias[o];
            for i in 0..nin {
                z += row[i] * input[i];
            }
            out[o] = if l < last { z.max(0.0) } else { z };
        }
        acts.push(out);
        off += nin * nout + nout;
    }
    acts[acts.len() - 1][0]
}

/// Mean of `½(f(x) − y)²` over the batch plus `½·alpha·‖W‖²`, and its
/// gradient with respect to the flat parameter vector.
pub fn loss_and_grad(widths: &[usize], params: &[f64], x: &[&[f64]], y: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let mut acts = Vec::new();
    let mut loss = 0.0;
    let n = x.len() as f64;
    let layers: Vec<(usize, usize, usize)> = {
        let mut off = 0;
        widths
            .windows(2)
            .map(|w| {
                let r = (off, w[0], w[1]);
                off += w[0] * w[1] + w[1];
                r
            })
            .collect()
    };
    for (xi, &yi) in x.iter().zip(y) {
        let out = forward_with(widths, params, xi, &mut acts);
        let err = out - yi;
        loss += 0.5 * err * err;
        let mut delta = vec![err / n];
        for l in (0..layers.len()).rev() {
            let (off, nin, nout) = layers[l];
            let input = &acts[l];
            let mut prev = vec![0.0; nin];
            for o in 0..nout {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = off + o * nin;
                for i in 0..nin {
                    grad[row + i] += d * input[i];
                    prev[i] += d * params[row + i];
                }
                grad[off + nin * nout + o] += d;
            }
            if l > 0 {
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
    }
    loss /= n;
    for &(off, nin, nout) in &layers {
        for i in off..off + nin * nout {
            loss += 0.5 * alpha * params[i] * params[i];
            grad[i] += alpha * params[i];
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub standardizer: Standardizer,
    pub y_mean: f64,
    pub y_scale: f64,
    pub network: Network,
    pub epochs_run: usize,
}

impl MlpModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let z = self.standardizer.transform_row(row);
        self.y_mean + self.y_scale * self.network.forward(&z)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Minibatch Adam with early stopping on a held-out slice of the training
/// rows; the best validation weights are kept.
pub fn fit_mlp(x: &[Vec<f64>], y: &[f64], params: &MlpParams, seed: u64) -> Result<MlpModel> {
    let standardizer = Standardizer::fit(x);
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardizer.transform_row(r)).collect();
    let n = y.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_sd = (y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64).sqrt();
    let y_scale = if y_sd > 1e-12 { y_sd } else { 1.0 };
    let t: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = if n >= 20 { (n as f64 * params.validation_fraction).round() as usize } else { 0 };
    let (val, train) = order.split_at(n_val);
    let mut train = train.to_vec();

    let mut widths = vec![z.first().map_or(0, Vec::len)];
    widths.extend(std::iter::repeat_n(params.hidden_units, params.layers));
    widths.push(1);
    let mut net = Network::init(widths, &mut rng);
    let mut adam = Adam { m: vec![0.0; net.params.len()], v: vec![0.0; net.params.len()], t: 0 };

    let val_loss = |net: &Network| -> f64 {
        val.iter().map(|&i| (net.forward(&z[i]) - t[i]).powi(2)).sum::<f64>() / val.len().max(1) as f64
    };
    let mut best = (f64::INFINITY, net.params.clone(), 0);
    let mut stale = 0;
    let mut epochs_run = 0;
    for epoch in 0..params.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(params.batch_size.max(1)) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| z[i].as_slice()).collect();
            let by: Vec<f64> = batch.iter().map(|&i| t[i]).collect();
            let (loss, grad) = loss_and_grad(&net.widths, &net.params, &bx, &by, params.alpha);
            if !loss.is_finite() {
                return Err(PredictorError::NonFiniteLoss);
            }
            adam.step(&mut net.params, &grad, params.learning_rate);
        }
        epochs_run = epoch + 1;
        if val.is_empty() {
            continue;
        }
        let vl = val_loss(&net);
        if !vl.is_finite() {
            return Err(PredictorError::NonFiniteLoss);
        }
        if vl < best.0 {
            best = (vl, net.params.clone(), epochs_run);
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.patience {
                break;
            }
        }
    }
    if !val.is_empty() && best.0.is_finite() {
        net.params = best.1;
        epochs_run = best.2;
    }
    Ok(MlpModel { standardizer, y_mean, y_scale, network: net, epochs_run })
}
