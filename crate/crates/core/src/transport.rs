//! Probability-flow transport of images.
//!
//! Forward: `x^n = x^{n-1} + a^{n-1} dt` with `a = f(x, t) - g(t)^2 s / 2`,
//! which embeds a precomputed score into the image. Reverse: the same drift
//! stepped backwards from `t = T` to `0` with a learned or given score.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fields::{ImageField, ScoreField, SdeSpec, TimeGrid};

/// Images `x^0 ..= x^N` produced by [`embed_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTrajectory {
    height: usize,
    width: usize,
    frames: Vec<Vec<f64>>,
}

impl EmbeddedTrajectory {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of frames, `N + 1`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.frames[n]
    }

    pub fn image(&self, n: usize) -> Result<ImageField> {
        ImageField::new(self.height, self.width, self.frames[n].clone())
    }

    pub fn last(&self) -> &[f64] {
        self.frames.last().expect("trajectory always holds x^0")
    }
}

/// Probability-flow drift `f(x, t) - g(t)^2 s / 2` per pixel.
pub fn average_drift(score: &[f64], state: &[f64], sde: &SdeSpec, t: f64) -> Vec<f64> {
    assert_eq!(score.len(), state.len());
    let half_g2 = 0.5 * sde.diffusion_sq(t);
    state
        .iter()
        .zip(score)
        .map(|(&x, &s)| sde.drift(x, t) - half_g2 * s)
        .collect()
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::DivergedTrajectory { step })
    }
}

/// Forward Euler on the flow with the score supplied by `score_at(x^{n-1}, n-1)`.
pub fn integrate_forward<F>(x0: &ImageField, sde: &SdeSpec, grid: TimeGrid, mut score_at: F) -> Result<EmbeddedTrajectory>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    let dt = grid.dt();
    let mut frames = Vec::with_capacity(grid.steps() + 1);
    frames.push(x0.values().to_vec());
    for n in 1..=grid.steps() {
        let prev = &frames[n - 1];
        let score = score_at(prev, n - 1)?;
        if score.len() != prev.len() {
            return Err(Error::ShapeError {
                expected: prev.len(),
                found: score.len(),
            });
        }
        let drift = average_drift(&score, prev, sde, grid.time(n - 1));
        let next: Vec<f64> = prev.iter().zip(&drift).map(|(x, a)| x + a * dt).collect();
        check_finite(&next, n)?;
        frames.push(next);
    }
    Ok(EmbeddedTrajectory {
        height: x0.height(),
        width: x0.width(),
        frames,
    })
}

/// Embeds a precomputed score field into `x0` by forward transport.
pub fn embed_forward(x0: &ImageField, scores: &ScoreField, sde: &SdeSpec, grid: TimeGrid) -> Result<EmbeddedTrajectory> {
    if scores.height() != x0.height() || scores.width() != x0.width() {
        return Err(Error::ShapeError {
            expected: x0.len(),
            found: scores.height() * scores.width(),
        });
    }
    if scores.slices() < grid.steps() {
        return Err(Error::invalid("score field does not cover every time step"));
    }
    integrate_forward(x0, sde, grid, |_, n| Ok(scores.slice(n).to_vec()))
}

/// Output of [`reverse_flow`]: every visited state plus the drift used at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversePath {
    /// `states[0] = x^N`, `states[N] = x^0`.
    pub states: Vec<Vec<f64>>,
    /// `drifts[r]` took `states[r]` to `states[r + 1]`.
    pub drifts: Vec<Vec<f64>>,
}

/// Reverse Euler from `t = T` to `0`: `x^{n-1} = x^n - a(x^n, t_n) dt`.
pub fn reverse_flow<F>(x_t: &[f64], sde: &SdeSpec, grid: TimeGrid, mut score_fn: F) -> Result<ReversePath>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    check_finite(x_t, grid.steps())?;
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.steps() + 1);
    let mut drifts = Vec::with_capacity(grid.steps());
    states.push(x_t.to_vec());
    for n in (1..=grid.steps()).rev() {
        let t = grid.time(n);
        let current = states.last().expect("non-empty");
        let score = score_fn(current, t)?;
        if score.len() != current.len() {
            return Err(Error::ShapeError {
                expected: current.len(),
                found: score.len(),
            });
        }
        let drift = average_drift(&score, current, sde, t);
        let next: Vec<f64> = current.iter().zip(&drift).map(|(x, a)| x - a * dt).collect();
        check_finite(&next, n - 1)?;
        states.push(next);
        drifts.push(drift);
    }
    Ok(ReversePath { states, drifts })
}

/// Replays recorded reverse drifts forwards, undoing a [`reverse_flow`].
pub fn replay_forward(x0: &[f64], drifts: &[Vec<f64>], dt: f64) -> Vec<f64> {
    drifts.iter().rev().fold(x0.to_vec(), |x, a| {
        x.iter().zip(a).map(|(x, a)| x + a * dt).collect()
    })
}

/// Denoises `x_t` by reverse flow and returns `snapshots` evenly spaced
/// states, the last being the final `t = 0` image.
pub fn ode_denoise<F>(x_t: &ImageField, score_fn: F, sde: &SdeSpec, grid: TimeGrid, snapshots: usize) -> Result<Vec<ImageField>>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    let steps = grid.steps();
    if snapshots == 0 || snapshots > steps {
        return Err(Error::invalid(alloc::format!(
            "snapshot count must be in 1..={steps}, got {snapshots}"
        )));
    }
    let path = reverse_flow(x_t.values(), sde, grid, score_fn)?;
    snapshot_indices(steps, snapshots)
        .map(|r| ImageField::new(x_t.height(), x_t.width(), path.states[r].clone()))
        .collect()
}

/// Reverse-step counts `round(j N / s)` for `j = 1..=s`.
pub fn snapshot_indices(steps: usize, snapshots: usize) -> impl Iterator<Item = usize> {
    (1..=snapshots).map(move |j| (j * steps + snapshots / 2) / snapshots)
}
