use num_complex::Complex64;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

const PIVOT_TOLERANCE: f64 = 1e-14;

/// `A = L D Lᵀ` for a complex-symmetric banded matrix, without pivoting.
///
/// The real part of the finite-element operator is positive definite, which
/// keeps the unpivoted factorization stable for the conductivities of interest.
#[derive(Clone, Debug)]
pub struct BandedLdl {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw..i] at offsets 0..bw
    lower: Vec<Complex64>,
    diag: Vec<Complex64>,
    condition: f64,
}

impl BandedLdl {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let bw = a.bandwidth();
        let zero = Complex64::new(0.0, 0.0);
        let mut lower = vec![zero; n * bw];
        let mut diag = vec![zero; n];
        let scale = (0..n).map(|i| a.get(i, i).norm()).fold(0.0, f64::max);
        let (mut dmax, mut dmin) = (0.0f64, f64::INFINITY);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base_i = i * bw + bw;
            let mut a_ii = zero;
            for (j, v) in a.row(i) {
                if j < i {
                    lower[base_i + j - i] = v;
                } else if j == i {
                    a_ii = v;
                }
            }
            // after this loop the slots hold w_j = L_ij d_j
            for j in lo..i {
                let base_j = j * bw + bw;
                let k0 = lo.max(j.saturating_sub(bw));
                let mut s = lower[base_i + j - i];
                for k in k0..j {
                    s -= lower[base_i + k - i] * lower[base_j + k - j];
                }
                lower[base_i + j - i] = s;
            }
            let mut d = a_ii;
            for j in lo..i {
                let w = lower[base_i + j - i];
                let l = w / diag[j];
                d -= l * w;
                lower[base_i + j - i] = l;
            }
            let mag = d.norm();
            if !mag.is_finite() || mag <= PIVOT_TOLERANCE * scale {
                return Err(Error::IllConditioned {
                    pivot: i,
                    condition: if mag > 0.0 { dmax.max(mag) / dmin.min(mag) } else { f64::INFINITY },
                });
            }
            dmax = dmax.max(mag);
            dmin = dmin.min(mag);
            diag[i] = d;
        }
        Ok(Self {
            n,
            bw,
            lower,
            diag,
            condition: if n == 0 { 1.0 } else { dmax / dmin },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Ratio of the largest to smallest pivot magnitude.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let (n, bw) = (self.n, self.bw);
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base = i * bw + bw;
            let mut s = x[i];
            for j in lo..i {
                s -= self.lower[base + j - i] * x[j];
            }
            x[i] = s;
        }
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= d;
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(bw);
            let base = i * bw + bw;
            let xi = x[i];
            for j in lo..i {
                x[j] -= self.lower[base + j - i] * xi;
            }
        }
        x
    }
}
