//! Initial log-density by kernel density estimation on the pixel lattice.
//!
//! Pixel intensities act as weights of samples located at their lattice
//! coordinates, so the estimate is a smoothed, normalised copy of the image.
//! The kernel is the triangular ("linear") kernel applied per axis. Its
//! support is compact, so evaluation only visits sources within one
//! bandwidth of each node and runs as two separable one-dimensional passes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fields::ImageField;

/// Log-safety floor applied before taking `ln p`.
pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Scott's rule with a Kish effective sample size.
    Scott,
    /// Fixed bandwidth in pixels.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
    pub floor: f64,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Scott,
            floor: DEFAULT_FLOOR,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid("fixed bandwidth must be positive"));
            }
        }
        if !(self.floor.is_finite() && self.floor > 0.0) {
            return Err(Error::invalid("density floor must be positive"));
        }
        Ok(())
    }
}

/// `K(u) = max(0, 1 - |u|)`.
#[inline]
pub fn triangular_kernel(u: f64) -> f64 {
    (1.0 - u.abs()).max(0.0)
}

/// Scott's rule `h = sigma * n_eff^(-1/(d+4))`; a zero spread falls back to one pixel.
pub fn scott_bandwidth(n_eff: f64, dim: usize, sigma: f64) -> Result<f64> {
    if !(n_eff >= 1.0) || !n_eff.is_finite() {
        return Err(Error::invalid("effective sample count must be at least 1"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("spread must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(1.0);
    }
    Ok(sigma * libm::pow(n_eff, -1.0 / (dim as f64 + 4.0)))
}

fn sample_weights(x: &ImageField) -> Result<Vec<f64>> {
    if let Some(k) = x.values().iter().position(|&v| v < 0.0) {
        return Err(Error::invalid(alloc::format!("negative sample weight at index {k}")));
    }
    let total: f64 = x.values().iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("image carries no density mass"));
    }
    Ok(x.values().iter().map(|v| v / total).collect())
}

/// Kish effective sample size and the axis-averaged weighted coordinate spread.
pub fn weighted_spread(x: &ImageField) -> Result<(f64, f64)> {
    let w = sample_weights(x)?;
    let width = x.width();
    let n_eff = 1.0 / w.iter().map(|v| v * v).sum::<f64>();

    let (mut mean_r, mut mean_c) = (0.0, 0.0);
    for (k, &wk) in w.iter().enumerate() {
        mean_r += wk * (k / width) as f64;
        mean_c += wk * (k % width) as f64;
    }
    let (mut var_r, mut var_c) = (0.0, 0.0);
    for (k, &wk) in w.iter().enumerate() {
        let dr = (k / width) as f64 - mean_r;
        let dc = (k % width) as f64 - mean_c;
        var_r += wk * dr * dr;
        var_c += wk * dc * dc;
    }
    Ok((n_eff, 0.5 * (libm::sqrt(var_r) + libm::sqrt(var_c))))
}

/// Resolves the configured bandwidth for this image.
pub fn resolve_bandwidth(x: &ImageField, cfg: &KdeConfig) -> Result<f64> {
    cfg.validate()?;
    match cfg.bandwidth {
        Bandwidth::Fixed(h) => Ok(h),
        Bandwidth::Scott => {
            let (n_eff, sigma) = weighted_spread(x)?;
            scott_bandwidth(n_eff, 2, sigma)
        }
    }
}

/// Normalised lattice density `p0`, summing to one.
pub fn kde_density(x: &ImageField, cfg: &KdeConfig) -> Result<Vec<f64>> {
    let h = resolve_bandwidth(x, cfg)?;
    let w = sample_weights(x)?;
    let (rows, cols) = (x.height(), x.width());

    // K(d / h) for integer offsets d with non-zero support.
    let reach = libm::floor(h) as usize;
    let taps: Vec<f64> = (0..=reach).map(|d| triangular_kernel(d as f64 / h)).collect();

    let mut along_cols = vec![0.0; rows * cols];
    for i in 0..rows {
        let src = &w[i * cols..(i + 1) * cols];
        for j in 0..cols {
            let lo = j.saturating_sub(reach);
            let hi = (j + reach).min(cols - 1);
            along_cols[i * cols + j] = (lo..=hi).map(|c| taps[j.abs_diff(c)] * src[c]).sum();
        }
    }
    let mut density = vec![0.0; rows * cols];
    for i in 0..rows {
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(rows - 1);
        for j in 0..cols {
            density[i * cols + j] = (lo..=hi)
                .map(|r| taps[i.abs_diff(r)] * along_cols[r * cols + j])
                .sum();
        }
    }

    let total: f64 = density.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::invalid("kernel sum vanished"));
    }
    density.iter_mut().for_each(|p| *p /= total);
    Ok(density)
}

/// Initial log-density `m0 = ln(max(p0, floor))`.
pub fn kde_log_density(x: &ImageField, cfg: &KdeConfig) -> Result<Vec<f64>> {
    let density = kde_density(x, cfg)?;
    Ok(density.into_iter().map(|p| libm::log(p.max(cfg.floor))).collect())
}
