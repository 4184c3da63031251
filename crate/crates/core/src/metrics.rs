//! Image quality metrics: per-pixel MSE and whole-image SSIM.
//!
//! SSIM uses global statistics (one mean, variance and covariance per image,
//! all normalised by `1/n`) with `c1 = 0.01 L`, `c2 = 0.03 L`, `c3 = c2 / 2`
//! and unit exponents.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConstants {
    pub dynamic_range: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl SsimConstants {
    pub fn new(dynamic_range: f64) -> Result<Self> {
        if !(dynamic_range.is_finite() && dynamic_range > 0.0) {
            return Err(Error::invalid("dynamic range must be positive"));
        }
        let c2 = 0.03 * dynamic_range;
        Ok(Self {
            dynamic_range,
            c1: 0.01 * dynamic_range,
            c2,
            c3: c2 / 2.0,
        })
    }
}

impl Default for SsimConstants {
    fn default() -> Self {
        Self::new(1.0).expect("unit range is valid")
    }
}

/// SSIM and its luminance, contrast and structure factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimReport {
    pub ssim: f64,
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

fn check_shapes(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeError {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::invalid("metrics need at least one pixel"));
    }
    Ok(())
}

/// Mean over pixels of the squared difference.
pub fn mse(reference: &[f64], approx: &[f64]) -> Result<f64> {
    check_shapes(reference, approx)?;
    let sum: f64 = reference
        .iter()
        .zip(approx)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

pub fn ssim(reference: &[f64], approx: &[f64], consts: &SsimConstants) -> Result<SsimReport> {
    check_shapes(reference, approx)?;
    let n = reference.len() as f64;
    let mu_a = reference.iter().sum::<f64>() / n;
    let mu_b = approx.iter().sum::<f64>() / n;
    let moment = |x: &[f64], mx: f64, y: &[f64], my: f64| {
        x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n
    };
    let var_a = moment(reference, mu_a, reference, mu_a);
    let var_b = moment(approx, mu_b, approx, mu_b);
    let cov = moment(reference, mu_a, approx, mu_b);
    // sqrt(v * v) == v exactly, so identical inputs give factors of exactly 1.
    let sigma_ab = libm::sqrt(var_a * var_b);

    let luminance = (2.0 * mu_a * mu_b + consts.c1) / (mu_a * mu_a + mu_b * mu_b + consts.c1);
    let contrast = (2.0 * sigma_ab + consts.c2) / (var_a + var_b + consts.c2);
    let structure = (cov + consts.c3) / (sigma_ab + consts.c3);
    Ok(SsimReport {
        ssim: luminance * contrast * structure,
        luminance,
        contrast,
        structure,
    })
}
