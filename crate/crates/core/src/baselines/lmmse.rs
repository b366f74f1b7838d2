//! Linear MMSE (Wiener) equalizer over a tap window plus a constant term.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::boundaries::{optimize_boundaries, slice};
use crate::error::{ensure_len, Error, Result};
use crate::pam4::Class;
use crate::window::fill_window;

/// Diagonal loading applied when the correlation matrix is not positive definite.
pub const RIDGE: f64 = 1e-8;

/// Empirical normal equations `R w = p` of the augmented tap windows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    /// `dim x dim`, row-major, `dim = n_tap + 1` (last entry is the constant).
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub dim: usize,
}

impl NormalEquations {
    pub fn new(y: &[f64], targets: &[f64], n_tap: usize) -> Result<Self> {
        ensure_len("lmmse targets", y.len(), targets.len())?;
        if y.is_empty() {
            return Err(Error::Empty("lmmse training samples"));
        }
        if n_tap.is_multiple_of(2) {
            return Err(crate::error::config("n_tap must be odd"));
        }
        let dim = n_tap + 1;
        let mut r = vec![0.0; dim * dim];
        let mut p = vec![0.0; dim];
        let mut x = vec![1.0; dim];
        for (t, &a) in targets.iter().enumerate() {
            fill_window(y, t, &mut x[..n_tap]);
            for i in 0..dim {
                let xi = x[i];
                p[i] += xi * a;
                let row = &mut r[i * dim..(i + 1) * dim];
                for (rij, &xj) in row[i..].iter_mut().zip(&x[i..]) {
                    *rij += xi * xj;
                }
            }
        }
        let inv = 1.0 / y.len() as f64;
        for i in 0..dim {
            for j in i..dim {
                let v = r[i * dim + j] * inv;
                r[i * dim + j] = v;
                r[j * dim + i] = v;
            }
        }
        p.iter_mut().for_each(|v| *v *= inv);
        Ok(Self { r, p, dim })
    }

    /// `max_i |(R w - p)_i|`.
    pub fn residual(&self, w: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| {
                let row = &self.r[i * self.dim..(i + 1) * self.dim];
                (row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - self.p[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Solves by Cholesky, retrying once with [`RIDGE`] on the diagonal.
    /// Returns the solution and whether the ridge was needed.
    pub fn solve(&self) -> Result<(Vec<f64>, bool)> {
        let r = DMatrix::from_row_slice(self.dim, self.dim, &self.r);
        let p = DVector::from_column_slice(&self.p);
        if let Some(chol) = r.clone().cholesky() {
            return Ok((chol.solve(&p).iter().copied().collect(), false));
        }
        log::warn!("lmmse correlation matrix is singular; adding ridge {RIDGE:e}");
        let loaded = r + DMatrix::identity(self.dim, self.dim) * RIDGE;
        match loaded.cholesky() {
            Some(chol) => Ok((chol.solve(&p).iter().copied().collect(), true)),
            None => Err(Error::Degenerate("lmmse correlation matrix".into())),
        }
    }
}

/// FIR equalizer `z[t] = sum_r taps[r] y[t - n_tap/2 + r] + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFilter {
    pub taps: Vec<f64>,
    pub bias: f64,
    /// Set when the ridge fallback was used.
    pub ridge: bool,
}

impl LinearFilter {
    pub fn equalize(&self, y: &[f64]) -> Vec<f64> {
        if y.is_empty() {
            return Vec::new();
        }
        let mut w = vec![0.0; self.taps.len()];
        (0..y.len())
            .map(|t| {
                fill_window(y, t, &mut w);
                w.iter().zip(&self.taps).map(|(a, b)| a * b).sum::<f64>() + self.bias
            })
            .collect()
    }
}

/// Wiener solution mapping tap windows of `y` to `targets`.
pub fn fit_lmmse(y: &[f64], targets: &[f64], n_tap: usize) -> Result<LinearFilter> {
    let ne = NormalEquations::new(y, targets, n_tap)?;
    let (mut w, ridge) = ne.solve()?;
    let bias = w.pop().expect("dim >= 1");
    Ok(LinearFilter {
        taps: w,
        bias,
        ridge,
    })
}

/// Linear equalizer followed by a three-threshold slicer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmseEqualizer {
    pub filter: LinearFilter,
    /// Strictly increasing decision thresholds between adjacent classes.
    pub boundaries: [f64; 3],
}

impl LmmseEqualizer {
    /// Fits the filter to the class amplitudes, then places BER-optimal
    /// thresholds on the equalized training output.
    pub fn fit(y: &[f64], labels: &[Class], n_tap: usize) -> Result<Self> {
        let targets: Vec<f64> = labels.iter().map(|c| c.amplitude()).collect();
        let filter = fit_lmmse(y, &targets, n_tap)?;
        let z = filter.equalize(y);
        let boundaries = optimize_boundaries(&z, labels)?;
        Ok(Self { filter, boundaries })
    }

    pub fn decide(&self, y: &[f64]) -> Vec<Class> {
        self.filter
            .equalize(y)
            .iter()
            .map(|&z| slice(z, &self.boundaries))
            .collect()
    }
}
