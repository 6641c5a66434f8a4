//! Symmetric banded storage and an unpivoted LDL^T factorization.
//!
//! The shifted Maxwell operator is indefinite once the shift passes the
//! lowest eigenvalue, so Cholesky is not an option; LDL^T without pivoting is
//! stable enough for these diagonally dominated stencils and its pivot signs
//! give the Sylvester inertia (the number of eigenvalues below the shift).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix. Row `i` stores columns `i - bw ..= i`.
#[derive(Debug, Clone)]
pub struct SymmetricBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymmetricBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let off = self.bw + lo - i;
            let mut acc = 0.0;
            for (k, j) in (lo..i).enumerate() {
                let a = row[off + k];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc + row[self.bw] * x[i];
        }
    }

    /// Returns `A - shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            let s = out.slot(i, i);
            out.data[s] -= shift;
        }
        out
    }

    /// Factorizes into `L D L^T` with unit lower-triangular `L`.
    pub fn ldlt(&self) -> Result<BandLdlt> {
        let (n, bw) = (self.n, self.bw);
        let mut l = self.data.clone();
        let mut d = vec![0.0; n];
        let mut scratch = vec![0.0; bw];
        let scale = (0..n).map(|i| self.data[self.slot(i, i)].abs()).fold(0.0, f64::max);
        let tiny = scale * 1e-14;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base_i = i * (bw + 1) + bw - i;
            // l[i][j] currently holds a_ij; turn into L_ij
            for j in lo..i {
                let base_j = j * (bw + 1) + bw - j;
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = l[base_i + j];
                for k in klo..j {
                    s -= scratch[k - lo] * l[base_j + k];
                }
                // scratch holds L_ik * D_k for the finished columns
                scratch[j - lo] = s;
                l[base_i + j] = s / d[j];
            }
            let mut dii = l[base_i + i];
            for j in lo..i {
                dii -= scratch[j - lo] * l[base_i + j];
            }
            if !(dii.abs() > tiny) {
                return Err(Error::NoConvergence { residual: dii.abs() });
            }
            d[i] = dii;
            l[base_i + i] = 1.0;
        }
        Ok(BandLdlt { n, bw, l, d })
    }
}

#[derive(Debug, Clone)]
pub struct BandLdlt {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandLdlt {
    /// Number of negative pivots, equal to the number of eigenvalues of the
    /// factored matrix below zero.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base = i * (bw + 1) + bw - i;
            let mut s = x[i];
            for j in lo..i {
                s -= self.l[base + j] * x[j];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(bw);
            let base = i * (bw + 1) + bw - i;
            let xi = x[i];
            for j in lo..i {
                x[j] -= self.l[base + j] * xi;
            }
        }
    }
}
