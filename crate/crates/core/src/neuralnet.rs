//! Fully-connected ReLU regression network with explicit parameter
//! gradients.
//!
//! Parameters live in one flat vector. For each layer, in order from the
//! input, the weight matrix is stored row-major (`out x in`, so weight
//! `(o, i)` sits at `offset + o * in + i`) followed by the `out` biases.
//! Hidden layers use ReLU, the single output is linear.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::claims::DrugCombination;
use crate::{Error, Result};

/// A network input: either a dense vector or the active coordinates of a
/// multi-hot vector.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Dense(&'a [f64]),
    MultiHot { dim: usize, active: &'a [u32] },
}

impl Input<'_> {
    fn dim(&self) -> usize {
        match self {
            Input::Dense(x) => x.len(),
            Input::MultiHot { dim, .. } => *dim,
        }
    }
}

/// Anything that can be fed to the network.
pub trait AsInput {
    fn as_input(&self) -> Input<'_>;
}

impl AsInput for [f64] {
    fn as_input(&self) -> Input<'_> {
        Input::Dense(self)
    }
}

impl AsInput for Vec<f64> {
    fn as_input(&self) -> Input<'_> {
        Input::Dense(self)
    }
}

impl AsInput for DrugCombination {
    fn as_input(&self) -> Input<'_> {
        Input::MultiHot {
            dim: self.dim(),
            active: self.drugs(),
        }
    }
}

impl<T: AsInput + ?Sized> AsInput for &T {
    fn as_input(&self) -> Input<'_> {
        (**self).as_input()
    }
}

/// Gradient restricted to the coordinates that can be non-zero for a
/// multi-hot input; every other coordinate is exactly zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGradient {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseGradient {
    pub fn to_dense(&self, m: usize) -> Vec<f64> {
        let mut g = vec![0.0; m];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            g[i] += v;
        }
        g
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    theta: Vec<f64>,
}

fn param_count(layer_dims: &[usize]) -> usize {
    layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidConfig("layer_dims needs an input and an output"));
    }
    if *layer_dims.last().unwrap() != 1 {
        return Err(Error::InvalidConfig("output layer must have width 1"));
    }
    if layer_dims.contains(&0) {
        return Err(Error::InvalidConfig("layer widths must be positive"));
    }
    Ok(())
}

impl Mlp {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization for
    /// weights and biases.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut theta = Vec::with_capacity(param_count(layer_dims));
        for w in layer_dims.windows(2) {
            let bound = 1.0 / libm::sqrt(w[0] as f64);
            for _ in 0..w[0] * w[1] + w[1] {
                theta.push(rng.random_range(-bound..=bound));
            }
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            theta,
        })
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            theta: vec![0.0; param_count(layer_dims)],
        })
    }

    pub fn from_parameters(layer_dims: &[usize], theta: Vec<f64>) -> Result<Self> {
        validate_dims(layer_dims)?;
        let m = param_count(layer_dims);
        if theta.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: theta.len(),
            });
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            theta,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Number of parameters `m`.
    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.theta
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.theta.iter().map(|t| t * t).sum())
    }

    fn check(&self, x: &Input<'_>) -> Result<()> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.dim(),
            });
        }
        if let Input::MultiHot { dim, active } = x {
            if let Some(&bad) = active.iter().find(|&&i| i as usize >= *dim) {
                return Err(Error::IndexOutOfRange { index: bad, dim: *dim });
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.predict(&x)
    }

    pub fn param_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let input = Input::Dense(x);
        self.check(&input)?;
        let mut g = vec![0.0; self.param_count()];
        let mut acts = Vec::new();
        self.forward_cached(input, &mut acts);
        self.backward(input, &acts, 1.0, |i, v| g[i] += v);
        Ok(g)
    }

    /// Scalar prediction for any input kind.
    pub fn predict<X: AsInput + ?Sized>(&self, x: &X) -> Result<f64> {
        let input = x.as_input();
        self.check(&input)?;
        let mut acts = Vec::new();
        Ok(self.forward_cached(input, &mut acts))
    }

    /// Prediction and the gradient over the coordinates that may be
    /// non-zero for this input.
    pub fn predict_with_gradient<X: AsInput + ?Sized>(&self, x: &X) -> Result<(f64, SparseGradient)> {
        let input = x.as_input();
        self.check(&input)?;
        let mut acts = Vec::new();
        let out = self.forward_cached(input, &mut acts);
        let mut grad = SparseGradient::default();
        self.backward(input, &acts, 1.0, |i, v| {
            grad.indices.push(i);
            grad.values.push(v);
        });
        Ok((out, grad))
    }

    /// Runs the forward pass; `acts[l]` holds the output of layer `l` after
    /// its activation. Returns the scalar output.
    fn forward_cached(&self, x: Input<'_>, acts: &mut Vec<Vec<f64>>) -> f64 {
        let n_layers = self.layer_dims.len() - 1;
        acts.resize_with(n_layers, Vec::new);
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let weights = &self.theta[offset..offset + n_in * n_out];
            let bias = &self.theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let (prev, rest) = acts.split_at_mut(l);
            let out = &mut rest[0];
            out.clear();
            out.extend_from_slice(bias);
            match (l, x) {
                (0, Input::MultiHot { active, .. }) => {
                    for (o, z) in out.iter_mut().enumerate() {
                        let row = &weights[o * n_in..(o + 1) * n_in];
                        *z += active.iter().map(|&i| row[i as usize]).sum::<f64>();
                    }
                }
                (0, Input::Dense(v)) => {
                    for (o, z) in out.iter_mut().enumerate() {
                        *z += dot(&weights[o * n_in..(o + 1) * n_in], v);
                    }
                }
                _ => {
                    let input = &prev[l - 1];
                    for (o, z) in out.iter_mut().enumerate() {
                        *z += dot(&weights[o * n_in..(o + 1) * n_in], input);
                    }
                }
            }
            if l + 1 < n_layers {
                for z in out.iter_mut() {
                    *z = z.max(0.0);
                }
            }
            offset += n_in * n_out + n_out;
        }
        acts[n_layers - 1][0]
    }

    /// Backpropagates `scale * d(output)/d(theta)` into `sink(index, value)`.
    /// Coordinates that are structurally zero for a multi-hot input are
    /// skipped; every other coordinate is emitted exactly once, in
    /// parameter order per layer.
    fn backward(&self, x: Input<'_>, acts: &[Vec<f64>], scale: f64, mut sink: impl FnMut(usize, f64)) {
        let n_layers = self.layer_dims.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.layer_dims.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = vec![scale];
        let mut next = Vec::new();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let off = offsets[l];
            let weights = &self.theta[off..off + n_in * n_out];
            match (l, x) {
                (0, Input::MultiHot { active, .. }) => {
                    for (o, &dz) in delta.iter().enumerate() {
                        for &i in active {
                            sink(off + o * n_in + i as usize, dz);
                        }
                    }
                }
                (0, Input::Dense(v)) => {
                    for (o, &dz) in delta.iter().enumerate() {
                        for (i, &xi) in v.iter().enumerate() {
                            sink(off + o * n_in + i, dz * xi);
                        }
                    }
                }
                _ => {
                    let input = &acts[l - 1];
                    for (o, &dz) in delta.iter().enumerate() {
                        for (i, &ai) in input.iter().enumerate() {
                            sink(off + o * n_in + i, dz * ai);
                        }
                    }
                }
            }
            for (o, &dz) in delta.iter().enumerate() {
                sink(off + n_in * n_out + o, dz);
            }
            if l > 0 {
                let input = &acts[l - 1];
                next.clear();
                next.resize(n_in, 0.0);
                for (o, &dz) in delta.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    for ((n, &w), &a) in next.iter_mut().zip(row).zip(input) {
                        if a > 0.0 {
                            *n += w * dz;
                        }
                    }
                }
                core::mem::swap(&mut delta, &mut next);
            }
        }
    }

    /// Training objective for `cfg` (see [`L2Scale`]).
    pub fn loss<X: AsInput>(&self, data: &[(X, f64)], cfg: &TrainConfig) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyTrainingData);
        }
        let mut acts = Vec::new();
        let mut sse = 0.0;
        for (x, y) in data {
            let input = x.as_input();
            self.check(&input)?;
            let r = self.forward_cached(input, &mut acts) - y;
            sse += r * r;
        }
        Ok(sse / data.len() as f64 + cfg.penalty_coef(data.len()) * sq_norm(&self.theta))
    }

    /// Mean-squared-error part of the loss over `batch` accumulated into
    /// `grad` (scaled by `1/denominator`); returns the summed squared error.
    fn accumulate<X: AsInput>(
        &self,
        batch: &[&(X, f64)],
        denominator: f64,
        grad: &mut [f64],
        acts: &mut Vec<Vec<f64>>,
    ) -> f64 {
        let mut sse = 0.0;
        for (x, y) in batch {
            let input = x.as_input();
            let r = self.forward_cached(input, acts) - y;
            sse += r * r;
            self.backward(input, acts, 2.0 * r / denominator, |i, v| grad[i] += v);
        }
        sse
    }

    /// Adam on the training objective, returning a copy holding the
    /// lowest-loss parameters seen (the starting point and the final iterate
    /// included).
    pub fn train<X: AsInput, R: Rng + ?Sized>(
        &self,
        data: &[(X, f64)],
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<(Mlp, TrainReport)> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyTrainingData);
        }
        for (x, _) in data {
            self.check(&x.as_input())?;
        }
        let m = self.param_count();
        let n = data.len();
        let full_batch = n <= cfg.batch_size;
        let mut net = self.clone();
        let mut best = self.clone();
        let mut best_loss = f64::INFINITY;
        let mut initial_loss = f64::NAN;
        let mut stale = 0usize;
        let mut lr = cfg.learning_rate;
        let mut adam = Adam::new(m);
        let mut grad = vec![0.0; m];
        let mut acts = Vec::new();
        let mut order: Vec<&(X, f64)> = data.iter().collect();
        let coef = cfg.penalty_coef(n);

        for epoch in 0..cfg.epochs {
            let loss = if full_batch {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let sse = net.accumulate(&order, n as f64, &mut grad, &mut acts);
                sse / n as f64 + coef * sq_norm(&net.theta)
            } else {
                net.loss(data, cfg)?
            };
            if epoch == 0 {
                initial_loss = loss;
            }
            if loss < best_loss {
                best_loss = loss;
                best.theta.copy_from_slice(&net.theta);
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.plateau_patience {
                    lr = (lr * cfg.plateau_factor).max(cfg.min_learning_rate.min(lr));
                    stale = 0;
                }
            }
            if full_batch {
                adam.step(&mut net.theta, &grad, 2.0 * coef, lr);
            } else {
                order.shuffle(rng);
                for batch in order.chunks(cfg.batch_size) {
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    net.accumulate(batch, batch.len() as f64, &mut grad, &mut acts);
                    adam.step(&mut net.theta, &grad, 2.0 * coef, lr);
                }
            }
        }
        let final_loss = net.loss(data, cfg)?;
        if final_loss < best_loss {
            best_loss = final_loss;
            best.theta.copy_from_slice(&net.theta);
        }
        Ok((
            best,
            TrainReport {
                initial_loss,
                final_loss,
                best_loss,
                final_learning_rate: lr,
            },
        ))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum()
}

/// How the L2 penalty is weighed against the mean squared error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum L2Scale {
    /// `mean((f - y)^2) + (lambda / 2) ||theta||^2`
    Fixed,
    /// `(sum((f - y)^2) + lambda ||theta||^2) / n`, the regularized least
    /// squares objective matching `U = lambda I + sum(g g^T)`.
    #[default]
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub l2_scale: L2Scale,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_learning_rate: f64,
    /// Data sets larger than this are split into shuffled mini-batches.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.01,
            l2_lambda: 1.0,
            l2_scale: L2Scale::PerSample,
            plateau_factor: 0.5,
            plateau_patience: 5,
            min_learning_rate: 1e-4,
            batch_size: 4096,
        }
    }
}

impl TrainConfig {
    /// Coefficient `c` of the penalty `c ||theta||^2` for `n` samples.
    pub fn penalty_coef(&self, n: usize) -> f64 {
        match self.l2_scale {
            L2Scale::Fixed => 0.5 * self.l2_lambda,
            L2Scale::PerSample => self.l2_lambda / n.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0"));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::InvalidConfig("l2_lambda must be >= 0"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::InvalidConfig("plateau_factor must lie in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    /// Loss of the starting parameters.
    pub initial_loss: f64,
    /// Loss of the last iterate.
    pub final_loss: f64,
    /// Loss of the returned parameters.
    pub best_loss: f64,
    pub final_learning_rate: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// `grad` holds the data-loss gradient; `l2 * theta` is added here.
    fn step(&mut self, theta: &mut [f64], grad: &[f64], l2: f64, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(Self::BETA1, self.t as f64);
        let c2 = 1.0 - libm::pow(Self::BETA2, self.t as f64);
        for (((p, g), m), v) in theta.iter_mut().zip(grad.iter()).zip(&mut self.m).zip(&mut self.v) {
            let g = g + l2 * *p;
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / (libm::sqrt(*v / c2) + Self::EPS);
        }
    }
}
