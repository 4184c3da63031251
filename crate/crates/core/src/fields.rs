//! Lattice data types shared by every stage of the pipeline.
//!
//! Images are stored row-major: node `(i, j)` lives at `k = i * W + j`. The
//! lattice spacing is one pixel in both directions, so stencils carry no
//! `1/dx^2` factors.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};

/// Smallest side length that leaves an interior for the five-point stencil.
pub const MIN_SIDE: usize = 3;

/// Row-major flat index of `(row, col)` on a grid of the given shape.
pub fn flatten_index(row: usize, col: usize, height: usize, width: usize) -> Result<usize> {
    if row >= height || col >= width {
        return Err(Error::IndexError {
            row,
            col,
            height,
            width,
        });
    }
    Ok(row * width + col)
}

/// Inverse of [`flatten_index`].
pub fn unflatten_index(k: usize, height: usize, width: usize) -> Result<(usize, usize)> {
    if width == 0 || k >= height * width {
        return Err(Error::IndexError {
            row: if width == 0 { k } else { k / width },
            col: if width == 0 { 0 } else { k % width },
            height,
            width,
        });
    }
    Ok((k / width, k % width))
}

/// A single-channel image on the pixel lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ImageField {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::GridTooSmall { height, width });
        }
        if values.len() != height * width {
            return Err(Error::ShapeError {
                expected: height * width,
                found: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(alloc::format!("non-finite value at index {k}")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                values.push(f(i, j));
            }
        }
        Self::new(height, width, values)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Result<f64> {
        Ok(self.values[flatten_index(row, col, self.height, self.width)?])
    }

    /// A copy with every value clamped into `[0, 1]`, used at export time.
    pub fn clamped(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }
}

/// Affinely maps raw intensities onto `[0, 1]`.
///
/// A constant image has no range to stretch and maps to `0.5` everywhere.
pub fn normalize_image(height: usize, width: usize, raw: &[f64]) -> Result<ImageField> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::GridTooSmall { height, width });
    }
    if raw.len() != height * width {
        return Err(Error::ShapeError {
            expected: height * width,
            found: raw.len(),
        });
    }
    if let Some(k) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(alloc::format!("non-finite value at index {k}")));
    }
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let values = if hi > lo {
        let span = hi - lo;
        raw.iter().map(|&v| (v - lo) / span).collect()
    } else {
        vec![0.5; raw.len()]
    };
    ImageField::new(height, width, values)
}

/// Uniform time discretisation of `[0, T]` into `N` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid("final time must be positive and finite"));
        }
        if steps == 0 {
            return Err(Error::invalid("number of time steps must be positive"));
        }
        Ok(Self { t_final, steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    /// Time of step `n`, `n * dt`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }
}

/// Forward SDE `dx = f(x, t) dt + g(t) dW`, evaluated pixel-wise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SdeSpec {
    /// `f = 0`, `g = sigma`. `sigma = 0` is accepted as degenerate dynamics.
    ZeroDrift { sigma: f64 },
    /// `f = -beta x / 2`, `g = sqrt(beta)`.
    VpLike { beta: f64 },
}

impl SdeSpec {
    pub fn zero_drift(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid("sigma must be finite and non-negative"));
        }
        Ok(SdeSpec::ZeroDrift { sigma })
    }

    pub fn vp_like(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta must be positive and finite"));
        }
        Ok(SdeSpec::VpLike { beta })
    }

    #[inline]
    pub fn drift(&self, x: f64, _t: f64) -> f64 {
        match *self {
            SdeSpec::ZeroDrift { .. } => 0.0,
            SdeSpec::VpLike { beta } => -0.5 * beta * x,
        }
    }

    #[inline]
    pub fn diffusion(&self, _t: f64) -> f64 {
        match *self {
            SdeSpec::ZeroDrift { sigma } => sigma,
            SdeSpec::VpLike { beta } => libm::sqrt(beta),
        }
    }

    /// `g(t)^2`, computed without the square root round trip.
    #[inline]
    pub fn diffusion_sq(&self, _t: f64) -> f64 {
        match *self {
            SdeSpec::ZeroDrift { sigma } => sigma * sigma,
            SdeSpec::VpLike { beta } => beta,
        }
    }

    pub fn drift_field(&self, state: &[f64], t: f64) -> Vec<f64> {
        state.iter().map(|&x| self.drift(x, t)).collect()
    }
}

/// Lattice values for every time step `n = 0..=N`, stored in `(n, i, j)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    height: usize,
    width: usize,
    grid: TimeGrid,
    data: Vec<f64>,
}

impl FieldSeries {
    pub fn new(height: usize, width: usize, grid: TimeGrid, data: Vec<f64>) -> Result<Self> {
        let expected = height * width * (grid.steps() + 1);
        if data.len() != expected {
            return Err(Error::ShapeError {
                expected,
                found: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(alloc::format!("non-finite entry at flat index {k}")));
        }
        Ok(Self {
            height,
            width,
            grid,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, grid: TimeGrid) -> Self {
        Self {
            height,
            width,
            grid,
            data: vec![0.0; height * width * (grid.steps() + 1)],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Number of stored slices, `N + 1`.
    pub fn slices(&self) -> usize {
        self.grid.steps() + 1
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        let d = self.height * self.width;
        &self.data[n * d..(n + 1) * d]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        let d = self.height * self.width;
        &mut self.data[n * d..(n + 1) * d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// `m = log p` on the lattice at every time step.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDensityField(pub FieldSeries);

/// Central-difference score of a [`LogDensityField`] at every time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField(pub FieldSeries);

impl Deref for LogDensityField {
    type Target = FieldSeries;
    fn deref(&self) -> &FieldSeries {
        &self.0
    }
}

impl Deref for ScoreField {
    type Target = FieldSeries;
    fn deref(&self) -> &FieldSeries {
        &self.0
    }
}
