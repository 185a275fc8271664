use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, MlpArchitecture, MlpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics only; nothing is mutated.
    Infer,
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Bias-free affine map followed by batch normalization and LeakyReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    /// `fan_in × fan_out`.
    pub weight: Matrix,
    pub bn_scale: Vec<f64>,
    pub bn_shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayer {
    /// `fan_in × n_classes`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub arch: MlpArchitecture,
    pub hidden: Vec<HiddenLayer>,
    pub output: OutputLayer,
    /// Number of optimizer steps applied so far.
    pub steps: u64,
}

/// Per-hidden-layer batch mean and (biased) variance of the pre-activations.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    input: Matrix,
    normalized: Matrix,
    inv_std: Vec<f64>,
    /// Batch-norm output before the activation.
    affine_bn: Matrix,
    stats: BatchStats,
}

/// Intermediate values of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    hidden: Vec<HiddenCache>,
    last_hidden: Matrix,
    pub probabilities: Matrix,
    log_normalizer: Vec<f64>,
    logits: Matrix,
}

impl ForwardCache {
    pub fn batch_stats(&self) -> Vec<BatchStats> {
        self.hidden.iter().map(|h| h.stats.clone()).collect()
    }

    /// Normalized (pre scale/shift) values of hidden layer `layer`.
    pub fn normalized(&self, layer: usize) -> &Matrix {
        &self.hidden[layer].normalized
    }
}

/// Gradients in [`MlpModel::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

pub struct LossAndGrad {
    pub loss: f64,
    pub gradients: Gradients,
    pub cache: ForwardCache,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data)
}

impl MlpModel {
    /// Weights uniform in `±√(6/(fan_in+fan_out))`, zero biases, identity
    /// batch norm. Deterministic in `(arch, seed)`.
    pub fn init(arch: MlpArchitecture, seed: u64) -> Result<Self, MlpError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = arch.dims();
        let hidden = (0..2)
            .map(|l| {
                let out = dims[l + 1];
                HiddenLayer {
                    weight: uniform_matrix(&mut rng, dims[l], out),
                    bn_scale: vec![1.0; out],
                    bn_shift: vec![0.0; out],
                    running_mean: vec![0.0; out],
                    running_var: vec![1.0; out],
                }
            })
            .collect();
        let output = OutputLayer {
            weight: uniform_matrix(&mut rng, dims[2], dims[3]),
            bias: vec![0.0; dims[3]],
        };
        Ok(Self {
            arch,
            hidden,
            output,
            steps: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    /// Trainable tensors in a fixed order: per hidden layer weight, scale,
    /// shift; then output weight and bias.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(8);
        for h in &self.hidden {
            out.push(h.weight.as_slice());
            out.push(&h.bn_scale);
            out.push(&h.bn_shift);
        }
        out.push(self.output.weight.as_slice());
        out.push(&self.output.bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(8);
        for h in &mut self.hidden {
            out.push(h.weight.as_mut_slice());
            out.push(&mut h.bn_scale);
            out.push(&mut h.bn_shift);
        }
        out.push(self.output.weight.as_mut_slice());
        out.push(&mut self.output.bias);
        out
    }

    pub fn parameter_names() -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..2 {
            for t in ["weight", "bn_scale", "bn_shift"] {
                names.push(format!("hidden{l}.{t}"));
            }
        }
        names.push("output.weight".into());
        names.push("output.bias".into());
        names
    }

    fn check_input(&self, x: &Matrix) -> Result<(), MlpError> {
        if x.cols() != self.arch.input_dim {
            return Err(MlpError::DimensionMismatch {
                expected: self.arch.input_dim,
                found: x.cols(),
            });
        }
        Ok(())
    }

    /// Class probabilities for a batch. `Train` normalizes with batch
    /// statistics and folds them into the running statistics; `Infer` uses
    /// the running statistics.
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix, MlpError> {
        match mode {
            Mode::Infer => self.predict_proba(x),
            Mode::Train => {
                let cache = self.forward_train(x)?;
                self.absorb_batch_stats(&cache.batch_stats());
                Ok(cache.probabilities)
            }
        }
    }

    /// Training-mode forward pass without touching the running statistics.
    pub fn forward_train(&self, x: &Matrix) -> Result<ForwardCache, MlpError> {
        self.check_input(x)?;
        let b = x.rows();
        if b < 2 {
            return Err(MlpError::BatchTooSmall(b));
        }
        let eps = self.arch.batchnorm_epsilon;
        let slope = self.arch.leaky_slope;
        let mut hidden = Vec::with_capacity(2);
        let mut act = x.clone();
        for layer in &self.hidden {
            let z = act.matmul(&layer.weight);
            let width = z.cols();
            let mean: Vec<f64> = z.sum_rows().into_iter().map(|s| s / b as f64).collect();
            let mut var = vec![0.0; width];
            for i in 0..b {
                for ((v, zi), m) in var.iter_mut().zip(z.row(i)).zip(&mean) {
                    let d = zi - m;
                    *v += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= b as f64);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();

            let mut normalized = Matrix::zeros(b, width);
            let mut affine_bn = Matrix::zeros(b, width);
            let mut next = Matrix::zeros(b, width);
            for i in 0..b {
                for j in 0..width {
                    let xh = (z.get(i, j) - mean[j]) * inv_std[j];
                    let y = layer.bn_scale[j] * xh + layer.bn_shift[j];
                    normalized.set(i, j, xh);
                    affine_bn.set(i, j, y);
                    next.set(i, j, leaky_relu(y, slope));
                }
            }
            hidden.push(HiddenCache {
                input: act,
                normalized,
                inv_std,
                affine_bn,
                stats: BatchStats { mean, var },
            });
            act = next;
        }
        let (logits, probabilities, log_normalizer) = self.output_head(&act);
        Ok(ForwardCache {
            hidden,
            last_hidden: act,
            probabilities,
            log_normalizer,
            logits,
        })
    }

    /// Folds batch statistics into the running statistics:
    /// `running ← momentum·running + (1 − momentum)·batch`.
    pub fn absorb_batch_stats(&mut self, stats: &[BatchStats]) {
        let m = self.arch.batchnorm_momentum;
        for (layer, s) in self.hidden.iter_mut().zip(stats) {
            for (r, v) in layer.running_mean.iter_mut().zip(&s.mean) {
                *r = m * *r + (1.0 - m) * v;
            }
            for (r, v) in layer.running_var.iter_mut().zip(&s.var) {
                *r = m * *r + (1.0 - m) * v;
            }
        }
    }

    fn output_head(&self, act: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
        let mut logits = act.matmul(&self.output.weight);
        for i in 0..logits.rows() {
            for (z, b) in logits.row_mut(i).iter_mut().zip(&self.output.bias) {
                *z += b;
            }
        }
        let mut probs = Matrix::zeros(logits.rows(), logits.cols());
        let mut lse = Vec::with_capacity(logits.rows());
        for i in 0..logits.rows() {
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
            let log_norm = max + sum.ln();
            for (p, z) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (z - log_norm).exp();
            }
            lse.push(log_norm);
        }
        (logits, probs, lse)
    }

    /// Inference-mode class probabilities, one row per input row. Pure.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, MlpError> {
        self.check_input(x)?;
        let eps = self.arch.batchnorm_epsilon;
        let slope = self.arch.leaky_slope;
        let mut act = x.clone();
        for layer in &self.hidden {
            let mut z = act.matmul(&layer.weight);
            let scale: Vec<f64> = layer
                .bn_scale
                .iter()
                .zip(&layer.running_var)
                .map(|(g, v)| g / (v + eps).sqrt())
                .collect();
            for i in 0..z.rows() {
                for (j, v) in z.row_mut(i).iter_mut().enumerate() {
                    let y = (*v - layer.running_mean[j]) * scale[j] + layer.bn_shift[j];
                    *v = leaky_relu(y, slope);
                }
            }
            act = z;
        }
        Ok(self.output_head(&act).1)
    }

    /// Mean cross-entropy `−(1/B) Σ log p[label]` and its gradient with
    /// respect to every trainable tensor, by backpropagation through softmax,
    /// the output affine map, LeakyReLU, batch norm and the hidden affine maps.
    /// The model is not mutated; see [`absorb_batch_stats`](Self::absorb_batch_stats).
    pub fn loss_and_grad(&self, x: &Matrix, labels: &[usize]) -> Result<LossAndGrad, MlpError> {
        if labels.len() != x.rows() {
            return Err(MlpError::LabelCount {
                features: x.rows(),
                labels: labels.len(),
            });
        }
        let n_classes = self.arch.n_classes;
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(MlpError::LabelOutOfRange { label, n_classes });
        }
        let cache = self.forward_train(x)?;
        let b = x.rows() as f64;

        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| cache.log_normalizer[i] - cache.logits.get(i, y))
            .sum::<f64>()
            / b;

        // d loss / d logits = (p - onehot) / B
        let mut delta = cache.probabilities.clone();
        for (i, &y) in labels.iter().enumerate() {
            let row = delta.row_mut(i);
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v /= b);
        }
        let grad_out_w = cache.last_hidden.t_matmul(&delta);
        let grad_out_b = delta.sum_rows();
        let mut upstream = delta.matmul_t(&self.output.weight);

        let slope = self.arch.leaky_slope;
        let mut hidden_grads: Vec<[Vec<f64>; 3]> = Vec::with_capacity(2);
        for (l, (layer, hc)) in self.hidden.iter().zip(&cache.hidden).enumerate().rev() {
            let (rows, width) = upstream.shape();
            let mut grad_scale = vec![0.0; width];
            let mut grad_shift = vec![0.0; width];
            // dL/dx̂ stored in place of upstream
            for i in 0..rows {
                for j in 0..width {
                    let dy = upstream.get(i, j) * leaky_relu_grad(hc.affine_bn.get(i, j), slope);
                    grad_scale[j] += dy * hc.normalized.get(i, j);
                    grad_shift[j] += dy;
                    upstream.set(i, j, dy * layer.bn_scale[j]);
                }
            }
            let sum_dxh = upstream.sum_rows();
            let mut sum_dxh_xh = vec![0.0; width];
            for i in 0..rows {
                for j in 0..width {
                    sum_dxh_xh[j] += upstream.get(i, j) * hc.normalized.get(i, j);
                }
            }
            let mut grad_z = Matrix::zeros(rows, width);
            for i in 0..rows {
                for j in 0..width {
                    let v = hc.inv_std[j] / b
                        * (b * upstream.get(i, j)
                            - sum_dxh[j]
                            - hc.normalized.get(i, j) * sum_dxh_xh[j]);
                    grad_z.set(i, j, v);
                }
            }
            let grad_w = hc.input.t_matmul(&grad_z);
            if l > 0 {
                upstream = grad_z.matmul_t(&layer.weight);
            }
            hidden_grads.push([grad_w.into_vec(), grad_scale, grad_shift]);
        }
        hidden_grads.reverse();

        let mut tensors = Vec::with_capacity(8);
        for [w, s, t] in hidden_grads {
            tensors.push(w);
            tensors.push(s);
            tensors.push(t);
        }
        tensors.push(grad_out_w.into_vec());
        tensors.push(grad_out_b);

        Ok(LossAndGrad {
            loss,
            gradients: Gradients { tensors },
            cache,
        })
    }

    /// True when every parameter and running statistic is finite and every
    /// running variance is non-negative.
    pub fn is_well_formed(&self) -> bool {
        let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
        self.parameters().iter().all(|t| finite(t))
            && self.hidden.iter().all(|h| {
                finite(&h.running_mean)
                    && finite(&h.running_var)
                    && h.running_var.iter().all(|v| *v >= 0.0)
            })
    }
}
