//! Dense score network, sliced score-matching loss, Adam, and the training loop.
//!
//! The network maps `[x; t/T]` (flattened image plus a linear time feature)
//! through `tanh` hidden layers to a `D`-dimensional score. Gradients are
//! computed by a hand-written reverse pass.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fields::{ImageField, ScoreField, SdeSpec, TimeGrid};
use crate::transport::embed_forward;

pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

/// Network weights. Layer `l` stores its `out x in` weight matrix row-major,
/// followed by its `out` biases, in one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations kept for the reverse pass.
struct Tape {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl ScoreNet {
    pub fn new(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("a network needs at least two non-empty layers"));
        }
        if sizes[0] < 2 || sizes[0] != sizes[sizes.len() - 1] + 1 {
            return Err(Error::invalid("input width must be output width plus one time feature"));
        }
        let expected = param_count(&sizes);
        if params.len() != expected {
            return Err(Error::ShapeError {
                expected,
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(Self { sizes, params })
    }

    /// Layers `[D + 1, hidden.., D]`, weights `N(0, 1) / sqrt(fan_in)`, zero biases.
    pub fn init(dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(dim + 1);
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(&sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = 1.0 / libm::sqrt(fan_in as f64);
            for _ in 0..fan_in * fan_out {
                let v: f64 = rng.sample(StandardNormal);
                params.push(v * scale);
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Self::new(sizes, params)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Image dimension `D`.
    pub fn dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.sizes.windows(2).scan(0usize, |offset, w| {
            let start = *offset;
            *offset += w[0] * w[1] + w[1];
            Some((start, w[0], w[1]))
        })
    }

    fn run(&self, x: &[f64], t: f64, t_final: f64) -> Result<Tape> {
        if x.len() != self.dim() {
            return Err(Error::ShapeError {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut input = Vec::with_capacity(x.len() + 1);
        input.extend_from_slice(x);
        input.push(t / t_final);
        let n_layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input);
        for (l, (offset, fan_in, fan_out)) in self.layers().enumerate() {
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let a = &activations[l];
            let hidden = l + 1 < n_layers;
            let out: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(biases)
                .map(|(row, b)| {
                    let z = row.iter().zip(a).map(|(w, a)| w * a).sum::<f64>() + b;
                    if hidden {
                        libm::tanh(z)
                    } else {
                        z
                    }
                })
                .collect();
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalError {
                    context: "network forward pass",
                    epoch: None,
                });
            }
            activations.push(out);
        }
        Ok(Tape { activations })
    }

    /// `s(x, t)` for a flattened image `x`.
    pub fn forward(&self, x: &[f64], t: f64, t_final: f64) -> Result<Vec<f64>> {
        let mut tape = self.run(x, t, t_final)?;
        Ok(tape.activations.pop().expect("output layer"))
    }

    /// Accumulates `d(loss)/d(params)` into `grads` given `d(loss)/d(output)`.
    fn backward(&self, tape: &Tape, grad_out: Vec<f64>, grads: &mut [f64]) {
        let layers: Vec<_> = self.layers().collect();
        let mut delta = grad_out;
        for (l, &(offset, fan_in, fan_out)) in layers.iter().enumerate().rev() {
            let input = &tape.activations[l];
            let (gw, gb) = grads[offset..offset + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for (o, d) in delta.iter().enumerate() {
                gb[o] += d;
                for (g, a) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for (o, d) in delta.iter().enumerate() {
                for (p, w) in prev.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * w;
                }
            }
            // Input to this layer came out of a tanh: d tanh = 1 - tanh^2.
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

/// Sliced score-matching loss `|lambda s(x + lambda z, t) + z|^2 / (2 g^2)`.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub x: &'a [f64],
    pub z: &'a [f64],
    pub t: f64,
    pub t_final: f64,
    pub lambda: f64,
    pub g: f64,
}

/// Loss value, adding `scale * d(loss)/d(params)` into `grads`.
pub fn sliced_loss_accumulate(net: &ScoreNet, inputs: &LossInputs<'_>, scale: f64, grads: &mut [f64]) -> Result<f64> {
    let LossInputs {
        x,
        z,
        t,
        t_final,
        lambda,
        g,
    } = *inputs;
    if !(lambda > 0.0) || !(g > 0.0) {
        return Err(Error::invalid("lambda and g must be positive"));
    }
    if z.len() != x.len() {
        return Err(Error::ShapeError {
            expected: x.len(),
            found: z.len(),
        });
    }
    let perturbed: Vec<f64> = x.iter().zip(z).map(|(x, z)| x + lambda * z).collect();
    let tape = net.run(&perturbed, t, t_final)?;
    let s = tape.activations.last().expect("output layer");
    let inv = 1.0 / (2.0 * g * g);
    let residual: Vec<f64> = s.iter().zip(z).map(|(s, z)| lambda * s + z).collect();
    let loss = inv * residual.iter().map(|r| r * r).sum::<f64>();
    let grad_out = residual.iter().map(|r| scale * 2.0 * inv * lambda * r).collect();
    net.backward(&tape, grad_out, grads);
    Ok(loss)
}

/// Loss and its full parameter gradient.
pub fn sliced_loss(net: &ScoreNet, inputs: &LossInputs<'_>) -> Result<(f64, Vec<f64>)> {
    let mut grads = vec![0.0; net.num_params()];
    let loss = sliced_loss_accumulate(net, inputs, 1.0, &mut grads)?;
    Ok((loss, grads))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(num_params: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.first.len());
        self.step += 1;
        let bias1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let bias2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
    }
}

/// Geometric perturbation ladder `lambda(t) = min (max/min)^(t/T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub min: f64,
    pub max: f64,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self { min: 0.01, max: 0.5 }
    }
}

impl LambdaSchedule {
    pub fn at(&self, t: f64, t_final: f64) -> f64 {
        self.min * libm::pow(self.max / self.min, t / t_final)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMode {
    /// Inputs follow the transport of the precomputed score.
    #[default]
    Embedded,
    /// Inputs stay at `x^0`; the loss and network are unchanged.
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lambda: LambdaSchedule,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lambda: LambdaSchedule::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            seed: 0,
            mode: TrainMode::Embedded,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.lambda.min > 0.0 && self.lambda.min <= self.lambda.max) || !self.lambda.max.is_finite() {
            return Err(Error::invalid("lambda ladder needs 0 < min <= max"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layers must be non-empty"));
        }
        Ok(())
    }
}

/// Progress handed to the training observer after every optimiser step.
#[derive(Debug)]
pub struct EpochReport<'a> {
    /// One-based epoch index.
    pub epoch: usize,
    /// Loss summed over time steps, evaluated before this epoch's update.
    pub loss: f64,
    pub net: &'a ScoreNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub net: ScoreNet,
    pub loss_trace: Vec<f64>,
}

/// Training inputs `x^n`, `n = 0..=N`, for the chosen mode.
pub fn training_states(
    scores: Option<&ScoreField>,
    x: &ImageField,
    sde: &SdeSpec,
    grid: TimeGrid,
    mode: TrainMode,
) -> Result<Vec<Vec<f64>>> {
    match mode {
        TrainMode::Embedded => {
            let scores = scores.ok_or_else(|| Error::invalid("embedded mode needs a score field"))?;
            let traj = embed_forward(x, scores, sde, grid)?;
            Ok((0..traj.len()).map(|n| traj.frame(n).to_vec()).collect())
        }
        TrainMode::Baseline => Ok(vec![x.values().to_vec(); grid.steps() + 1]),
    }
}

/// Runs `cfg.epochs` epochs; see [`train_with`].
pub fn train(scores: Option<&ScoreField>, x: &ImageField, sde: &SdeSpec, grid: TimeGrid, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(scores, x, sde, grid, cfg, |_| ControlFlow::Continue(()))
}

/// Each epoch sweeps `n = 1..=N`, perturbs `x^n` with fresh noise, sums the
/// loss over `n` and takes a single Adam step. The observer may stop early.
pub fn train_with(
    scores: Option<&ScoreField>,
    x: &ImageField,
    sde: &SdeSpec,
    grid: TimeGrid,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochReport<'_>) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut net = ScoreNet::init(x.len(), &cfg.hidden, cfg.seed)?;
    let states = training_states(scores, x, sde, grid, cfg.mode)?;
    let mut adam = Adam::new(net.num_params(), cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise.set_stream(1);

    let t_final = grid.t_final();
    let mut grads = vec![0.0; net.num_params()];
    let mut z = vec![0.0; x.len()];
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for (n, state) in states.iter().enumerate().skip(1) {
            z.iter_mut().for_each(|v| *v = noise.sample(StandardNormal));
            let t = grid.time(n);
            let inputs = LossInputs {
                x: state,
                z: &z,
                t,
                t_final,
                lambda: cfg.lambda.at(t, t_final),
                g: sde.diffusion(t),
            };
            total += sliced_loss_accumulate(&net, &inputs, 1.0, &mut grads).map_err(|e| match e {
                Error::NumericalError { context, .. } => Error::NumericalError {
                    context,
                    epoch: Some(epoch),
                },
                other => other,
            })?;
        }
        let loss = total;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericalError {
                context: "loss",
                epoch: Some(epoch),
            });
        }
        adam.step(net.params_mut(), &grads, cfg.learning_rate);
        loss_trace.push(loss);
        if observer(&EpochReport {
            epoch,
            loss,
            net: &net,
        })
        .is_break()
        {
            break;
        }
    }
    Ok(TrainOutcome { net, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = ScoreNet::init(9, &[5, 4], 7).unwrap();
        let b = ScoreNet::init(9, &[5, 4], 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sizes(), &[10, 5, 4, 9]);
        let out = a.forward(&[0.0; 9], 0.0, 1.0).unwrap();
        assert_eq!(out, vec![0.0; 9]);
    }

    #[test]
    fn different_seeds_differ_almost_everywhere() {
        let a = ScoreNet::init(16, &[32, 32], 1).unwrap();
        let b = ScoreNet::init(16, &[32, 32], 2).unwrap();
        let (differ, weights) = a
            .params()
            .iter()
            .zip(b.params())
            .filter(|(x, y)| **x != 0.0 || **y != 0.0)
            .fold((0usize, 0usize), |(d, n), (x, y)| (d + usize::from(x != y), n + 1));
        assert!(differ as f64 >= 0.99 * weights as f64);
    }

    #[test]
    fn zero_network_gives_noise_norm_loss() {
        let sizes = vec![5, 3, 4];
        let net = ScoreNet::new(sizes.clone(), vec![0.0; param_count(&sizes)]).unwrap();
        let z = [0.3, -1.2, 0.5, 2.0];
        let inputs = LossInputs {
            x: &[0.1, 0.2, 0.3, 0.4],
            z: &z,
            t: 0.3,
            t_final: 1.0,
            lambda: 0.2,
            g: 1.5,
        };
        let (loss, _) = sliced_loss(&net, &inputs).unwrap();
        let expected = z.iter().map(|v| v * v).sum::<f64>() / (2.0 * 1.5 * 1.5);
        assert!((loss - expected).abs() < 1e-15);
    }

    #[test]
    fn perfect_score_gives_zero_loss() {
        // Linear single-layer net: s(y) = W y + b with W = -I/lambda^2,
        // b = x/lambda^2, so s(x + lambda z) = -z/lambda.
        let (d, lambda) = (3, 0.25);
        let x = [0.2, 0.5, 0.9];
        let mut params = vec![0.0; (d + 1) * d + d];
        for o in 0..d {
            params[o * (d + 1) + o] = -1.0 / (lambda * lambda);
            params[(d + 1) * d + o] = x[o] / (lambda * lambda);
        }
        let net = ScoreNet::new(vec![d + 1, d], params).unwrap();
        let z = [0.5, -1.0, 0.25];
        let inputs = LossInputs {
            x: &x,
            z: &z,
            t: 0.0,
            t_final: 1.0,
            lambda,
            g: 1.0,
        };
        let (loss, _) = sliced_loss(&net, &inputs).unwrap();
        assert!(loss < 1e-24, "loss {loss}");
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0];
        let mut adam = Adam::new(2, 0.9, 0.999, 1e-8);
        adam.step(&mut p, &[0.0, 0.0], 0.1);
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn adam_first_step_is_unit_scaled() {
        let mut w = vec![1.0];
        let mut adam = Adam::new(1, 0.9, 0.999, 1e-8);
        let grad = [2.0 * w[0]];
        adam.step(&mut w, &grad, 0.1);
        assert!((w[0] - 0.9).abs() < 1e-8);
        assert_eq!(DEFAULT_LEARNING_RATE, 1e-3);
    }

    #[test]
    fn lambda_ladder_endpoints() {
        let l = LambdaSchedule::default();
        assert!((l.at(0.0, 2.0) - 0.01).abs() < 1e-15);
        assert!((l.at(2.0, 2.0) - 0.5).abs() < 1e-12);
        assert!((l.at(1.0, 2.0) - libm::sqrt(0.005)).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_leave_initialisation() {
        let x = ImageField::filled(3, 3, 0.5).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let sde = SdeSpec::zero_drift(1.0).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            hidden: vec![4],
            mode: TrainMode::Baseline,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train(None, &x, &sde, grid, &cfg).unwrap();
        assert!(out.loss_trace.is_empty());
        assert_eq!(out.net, ScoreNet::init(9, &[4], 3).unwrap());
    }

    #[test]
    fn embedded_mode_requires_scores() {
        let x = ImageField::filled(3, 3, 0.5).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let sde = SdeSpec::zero_drift(1.0).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            hidden: vec![4],
            ..TrainConfig::default()
        };
        assert!(matches!(train(None, &x, &sde, grid, &cfg), Err(Error::InvalidInput(_))));
    }
}
