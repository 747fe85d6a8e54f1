//! Gaussian primitives: distribution functions, Toeplitz correlation
//! matrices, PSD Cholesky and correlated path sampling.

mod bvn;
mod normal;
mod sample;
mod toeplitz;

pub use bvn::bivariate_normal_cdf;
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile};
pub use sample::{
    path_seed, sample_gaussian_path, standard_normals, PathSampler, AR1_DIM_THRESHOLD,
};
pub use toeplitz::{cholesky_psd, CholeskyFactor, CorrelationMatrix};

pub(crate) use normal::{log_phi, phi_raw};
