//! Toeplitz correlation matrices and a jitter-escalating PSD Cholesky.

use crate::error::{Error, Result};

/// Symmetric Toeplitz correlation matrix with unit diagonal, described by
/// its first row of lag correlations `d_0 = 1, d_1, ..., d_{T-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    lags: Vec<f64>,
}

impl CorrelationMatrix {
    /// Builds the matrix from its lag sequence. `lags[0]` must be exactly 1
    /// and every entry must be a correlation.
    pub fn from_lags(lags: Vec<f64>) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::domain("correlation matrix dimension must be >= 1"));
        }
        if lags[0] != 1.0 {
            return Err(Error::domain(format!(
                "lag-0 correlation must be 1, got {}",
                lags[0]
            )));
        }
        for (i, &d) in lags.iter().enumerate() {
            if !(d.is_finite() && (-1.0..=1.0).contains(&d)) {
                return Err(Error::domain(format!(
                    "lag-{i} correlation {d} outside [-1,1]"
                )));
            }
        }
        Ok(Self { lags })
    }

    /// Builds a T x T matrix whose lag-i correlation is `kernel(i)`.
    pub fn from_lag_fn(dim: usize, kernel: impl Fn(usize) -> f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("correlation matrix dimension must be >= 1"));
        }
        Self::from_lags((0..dim).map(kernel).collect())
    }

    pub fn dim(&self) -> usize {
        self.lags.len()
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.lags[i.abs_diff(j)]
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let t = self.dim();
        let mut m = vec![0.0; t * t];
        for i in 0..t {
            for j in 0..t {
                m[i * t + j] = self.entry(i, j);
            }
        }
        m
    }
}

/// Lower-triangular factor L with L Lᵀ = Σ + jitter_used·I.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    /// Row-major dense storage; strictly-upper entries are zero.
    lower: Vec<f64>,
    jitter_used: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// out = L z.
    pub fn multiply(&self, z: &[f64], out: &mut [f64]) {
        let t = self.dim;
        assert_eq!(z.len(), t);
        assert_eq!(out.len(), t);
        for i in 0..t {
            let row = &self.lower[i * t..i * t + i + 1];
            out[i] = row.iter().zip(&z[..=i]).map(|(l, zj)| l * zj).sum();
        }
    }
}

/// Factors a unit-diagonal Toeplitz correlation matrix, escalating a
/// diagonal jitter (0, then 1e-12·2^j) until the factorization succeeds or
/// the jitter would exceed `max_jitter`.
pub fn cholesky_psd(sigma: &CorrelationMatrix, max_jitter: f64) -> Result<CholeskyFactor> {
    if !(max_jitter >= 0.0) {
        return Err(Error::domain(format!(
            "max_jitter must be nonnegative, got {max_jitter}"
        )));
    }
    let dim = sigma.dim();
    let mut jitter = 0.0_f64;
    let mut attempt = 0u32;
    loop {
        if let Some(lower) = try_cholesky(sigma, jitter) {
            return Ok(CholeskyFactor {
                dim,
                lower,
                jitter_used: jitter,
            });
        }
        let next = if jitter == 0.0 {
            1e-12
        } else {
            jitter * 2.0
        };
        if next > max_jitter {
            return Err(Error::NotPositiveSemidefinite {
                dim,
                last_jitter: jitter,
                max_jitter,
            });
        }
        jitter = next;
        attempt += 1;
        debug_assert!(attempt < 200);
    }
}

fn try_cholesky(sigma: &CorrelationMatrix, jitter: f64) -> Option<Vec<f64>> {
    let t = sigma.dim();
    let mut a = sigma.to_dense();
    for i in 0..t {
        a[i * t + i] += jitter;
    }
    // in-place lower Cholesky
    for j in 0..t {
        let mut diag = a[j * t + j];
        for k in 0..j {
            diag -= a[j * t + k] * a[j * t + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let diag = diag.sqrt();
        a[j * t + j] = diag;
        for i in (j + 1)..t {
            let mut v = a[i * t + j];
            let (ri, rj) = (i * t, j * t);
            for k in 0..j {
                v -= a[ri + k] * a[rj + k];
            }
            a[ri + j] = v / diag;
        }
        for i in 0..j {
            a[i * t + j] = 0.0;
        }
    }
    // zero the upper triangle of the last column block
    for i in 0..t {
        for j in (i + 1)..t {
            a[i * t + j] = 0.0;
        }
    }
    Some(a)
}
