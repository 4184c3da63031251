//! Banded matrices and an in-band LU solver.
//!
//! Storage is row-major over the band: row `i` keeps columns
//! `i - lower ..= i + upper`, so an `n x n` matrix with bandwidths `(p, q)`
//! costs `n (p + q + 1)` scalars. Elimination runs without pivoting, which
//! keeps all fill-in inside the band and the work at `O(n p q)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of their row's largest original entry
/// are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn identity(n: usize, lower: usize, upper: usize) -> Self {
        let mut m = Self::zeros(n, lower, upper);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.lower
    }

    pub fn upper(&self) -> usize {
        self.upper
    }

    #[inline]
    fn stride(&self) -> usize {
        self.lower + self.upper + 1
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.lower >= i && j <= i + self.upper
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.stride() + (j + self.lower - i)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.offset(i, j)]
        } else {
            0.0
        }
    }

    /// Sets entry `(i, j)`.
    ///
    /// # Panics
    ///
    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let k = self.offset(i, j);
        self.data[k] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let k = self.offset(i, j);
        self.data[k] += value;
    }

    fn row_span(&self, i: usize) -> core::ops::Range<usize> {
        i.saturating_sub(self.lower)..(i + self.upper + 1).min(self.n)
    }

    /// Number of stored entries that are not exactly zero.
    pub fn nnz(&self) -> usize {
        (0..self.n)
            .map(|i| self.row_span(i).filter(|&j| self.get(i, j) != 0.0).count())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row_span(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Dense row-major copy, for inspection and small-system checks.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in self.row_span(i) {
                dense[i * self.n + j] = self.get(i, j);
            }
        }
        dense
    }

    /// Solves `A x = rhs` by banded Gaussian elimination.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::ShapeError {
                expected: self.n,
                found: rhs.len(),
            });
        }
        let n = self.n;
        let stride = self.stride();
        let (p, q) = (self.lower, self.upper);
        let mut a = self.data.clone();
        let mut x = rhs.to_vec();

        let scale: Vec<f64> = (0..n)
            .map(|i| self.row_span(i).fold(0.0_f64, |s, j| s.max(self.get(i, j).abs())))
            .collect();

        // Forward elimination. Column k of row i sits at i*stride + (k + p - i).
        for k in 0..n {
            let pivot = a[k * stride + p];
            if !(pivot.abs() > PIVOT_TOLERANCE * scale[k]) || !pivot.is_finite() {
                return Err(Error::SingularSystem { index: k, pivot });
            }
            let last_row = (k + p).min(n - 1);
            let last_col = (k + q).min(n - 1);
            for i in k + 1..=last_row {
                let ik = i * stride + (k + p - i);
                let factor = a[ik] / pivot;
                if factor == 0.0 {
                    continue;
                }
                a[ik] = factor;
                let row_i = i * stride + p - i;
                let row_k = k * stride + p - k;
                for j in k + 1..=last_col {
                    a[row_i + j] -= factor * a[row_k + j];
                }
                x[i] -= factor * x[k];
            }
        }

        // Back substitution.
        for k in (0..n).rev() {
            let row_k = k * stride + p - k;
            let last_col = (k + q).min(n - 1);
            let mut acc = x[k];
            for j in k + 1..=last_col {
                acc -= a[row_k + j] * x[j];
            }
            x[k] = acc / a[row_k + k];
        }
        Ok(x)
    }
}
