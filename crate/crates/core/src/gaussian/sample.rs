//! Correlated Gaussian path sampling with splittable, counter-style seeding.
//!
//! Every path of a batch draws from its own stream keyed by
//! `(global seed, path index)`, so results are bit-identical whether paths
//! are generated serially or in parallel and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::gaussian::toeplitz::{cholesky_psd, CholeskyFactor, CorrelationMatrix};
use crate::model::DecayKernel;

/// Mixes a global seed and a stream index into an independent stream seed.
pub fn path_seed(global_seed: u64, index: u64) -> u64 {
    let mut z = global_seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic stream of i.i.d. standard normals for one seed.
pub fn standard_normals(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// One latent factor path S_1..S_T: L z for i.i.d. standard normal z.
pub fn sample_gaussian_path(factor: &CholeskyFactor, seed: u64) -> Vec<f64> {
    let z = standard_normals(seed, factor.dim());
    let mut out = vec![0.0; factor.dim()];
    factor.multiply(&z, &mut out);
    out
}

/// Exponential kernels are Markov, so beyond this dimension the O(T)
/// stationary recursion replaces the dense factor.
pub const AR1_DIM_THRESHOLD: usize = 4096;

/// Path generator for a kernel family at a fixed horizon.
#[derive(Debug, Clone)]
pub enum PathSampler {
    Dense(CholeskyFactor),
    Ar1 { theta: f64, len: usize },
}

impl PathSampler {
    /// Chooses the sampler for a kernel: the AR(1) recursion for
    /// exponential kernels beyond [`AR1_DIM_THRESHOLD`], dense Cholesky of
    /// the Toeplitz matrix otherwise.
    pub fn for_kernel(kernel: &DecayKernel, len: usize, max_jitter: f64) -> Result<Self> {
        match *kernel {
            DecayKernel::Exponential { theta } if len > AR1_DIM_THRESHOLD => {
                Ok(PathSampler::Ar1 { theta, len })
            }
            _ => {
                let sigma = CorrelationMatrix::from_lag_fn(len, |i| kernel.value(i))?;
                Ok(PathSampler::Dense(cholesky_psd(&sigma, max_jitter)?))
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PathSampler::Dense(f) => f.dim(),
            PathSampler::Ar1 { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Transforms i.i.d. standard normals into one correlated path.
    pub fn transform(&self, z: &[f64], out: &mut [f64]) {
        match self {
            PathSampler::Dense(factor) => factor.multiply(z, out),
            PathSampler::Ar1 { theta, len } => {
                let scale = (1.0 - theta * theta).max(0.0).sqrt();
                out[0] = z[0];
                for t in 1..*len {
                    out[t] = theta * out[t - 1] + scale * z[t];
                }
            }
        }
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let z = standard_normals(seed, self.len());
        let mut out = vec![0.0; self.len()];
        self.transform(&z, &mut out);
        out
    }
}
