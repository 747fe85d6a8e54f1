//! Single-factor Merton layer: decay kernels, conditional default
//! probability, and the asset/default correlation mapping.
//!
//! Defaults in year t are driven by one latent factor S_t shared by all
//! obligors; an obligor defaults when sqrt(rho_A) S_t + sqrt(1-rho_A) eps
//! falls below the threshold Y = Phi^{-1}(p). Temporal dependence enters
//! through the lag correlations d_i of the factor path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    bivariate_normal_cdf, phi_raw, std_normal_pdf, std_normal_quantile, CorrelationMatrix,
};

/// Temporal correlation family of the systematic factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "param", rename_all = "lowercase")]
pub enum DecayKernel {
    /// Short memory: d_i = theta^i.
    Exponential { theta: f64 },
    /// Long/intermediate memory: d_i = (i+1)^{-gamma}.
    Power { gamma: f64 },
}

impl DecayKernel {
    pub fn exponential(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && (0.0..=1.0).contains(&theta)) {
            return Err(Error::domain(format!("theta must lie in [0,1], got {theta}")));
        }
        Ok(DecayKernel::Exponential { theta })
    }

    pub fn power(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::domain(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        Ok(DecayKernel::Power { gamma })
    }

    /// Lag-i correlation d_i; exactly 1 at lag 0.
    #[inline]
    pub fn value(&self, lag: usize) -> f64 {
        match *self {
            DecayKernel::Exponential { theta } => {
                if lag == 0 {
                    1.0
                } else {
                    theta.powi(lag as i32)
                }
            }
            DecayKernel::Power { gamma } => ((lag + 1) as f64).powf(-gamma),
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            DecayKernel::Exponential { theta } => theta,
            DecayKernel::Power { gamma } => gamma,
        }
    }
}

/// Everything needed to simulate or evaluate the model: long-run PD p,
/// asset correlation rho_A and the decay kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    p: f64,
    rho_a: f64,
    kernel: DecayKernel,
    /// Default threshold Y = Phi^{-1}(p), kept consistent with p.
    y: f64,
}

impl ModelParams {
    pub fn new(p: f64, rho_a: f64, kernel: DecayKernel) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("p must lie in (0,1), got {p}")));
        }
        if !(rho_a.is_finite() && (0.0..1.0).contains(&rho_a)) {
            return Err(Error::domain(format!(
                "rho_A must lie in [0,1), got {rho_a}"
            )));
        }
        let y = std_normal_quantile(p)?;
        Ok(Self { p, rho_a, kernel, y })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn rho_a(&self) -> f64 {
        self.rho_a
    }

    pub fn kernel(&self) -> &DecayKernel {
        &self.kernel
    }

    pub fn threshold(&self) -> f64 {
        self.y
    }
}

/// Conditional default probability G(s) = Phi((Y - sqrt(rho_A) s)/sqrt(1-rho_A)).
///
/// Decreasing in s; its expectation over s ~ N(0,1) is p. With rho_A = 0 the
/// factor drops out and G is identically p.
pub fn conditional_pd(params: &ModelParams, s: f64) -> f64 {
    debug_assert!(s.is_finite());
    if params.rho_a == 0.0 {
        return params.p;
    }
    let arg = (params.y - params.rho_a.sqrt() * s) / (1.0 - params.rho_a).sqrt();
    phi_raw(arg)
}

/// Default correlation of two obligors sharing a factor of correlation
/// `rho`: f(rho) = (Phi2(Y,Y;rho) - p^2) / (p(1-p)).
///
/// f(0) = 0, f(1) = 1, strictly increasing and convex in rho.
pub fn map_asset_to_default(p: f64, rho_a: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p must lie in (0,1), got {p}")));
    }
    if !(rho_a.is_finite() && (0.0..=1.0).contains(&rho_a)) {
        return Err(Error::domain(format!(
            "rho_A must lie in [0,1], got {rho_a}"
        )));
    }
    // the endpoints are identities: Phi2(Y,Y;0) = p^2 and Phi2(Y,Y;1) = p
    if rho_a == 0.0 {
        return Ok(0.0);
    }
    if rho_a == 1.0 {
        return Ok(1.0);
    }
    let y = std_normal_quantile(p)?;
    let joint = bivariate_normal_cdf(y, y, rho_a)?;
    // mathematically in [0,1]; rounding can leave ~1e-16 residue at f(~0)
    Ok(((joint - p * p) / (p * (1.0 - p))).clamp(0.0, 1.0))
}

/// Inverse of [`map_asset_to_default`] by bisection on the monotone f.
pub fn map_default_to_asset(p: f64, rho_d: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p must lie in (0,1), got {p}")));
    }
    if !(rho_d.is_finite() && (0.0..=1.0).contains(&rho_d)) {
        return Err(Error::domain(format!(
            "rho_D must lie in [0,1], got {rho_d}"
        )));
    }
    if rho_d == 0.0 {
        return Ok(0.0);
    }
    if rho_d == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fm = map_asset_to_default(p, mid)?;
        if (fm - rho_d).abs() <= 1e-12 {
            return Ok(mid);
        }
        if fm < rho_d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which linearization constant `A` of f near the origin to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeMode {
    /// True tangent slope f'(0) = phi(Y)^2 / (p(1-p)) via Plackett's identity.
    Plackett,
    /// The odds p/(1-p): the value obtained when the squared integral of
    /// the unnormalized normal density is used as the numerator. Kept as a
    /// documented variant; it does not match the finite-difference
    /// derivative of f (e.g. 1 vs 2/pi at p = 0.5).
    Odds,
}

/// Small-correlation slope A with f(rho) ~ A rho; strictly positive on (0,1).
pub fn tangent_slope_a(p: f64, mode: SlopeMode) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p must lie in (0,1), got {p}")));
    }
    match mode {
        SlopeMode::Plackett => {
            let y = std_normal_quantile(p)?;
            let pdf = std_normal_pdf(y);
            Ok(pdf * pdf / (p * (1.0 - p)))
        }
        SlopeMode::Odds => Ok(p / (1.0 - p)),
    }
}

/// Cross-time default correlation C(t) = f(rho_A d_t) for year lag t >= 1.
pub fn cross_time_default_correlation(params: &ModelParams, lag: usize) -> f64 {
    debug_assert!(lag >= 1);
    let d = params.kernel().value(lag);
    map_asset_to_default(params.p, params.rho_a * d)
        .expect("arguments validated by ModelParams")
}

/// Toeplitz correlation matrix of the factor path over `dim` years.
pub fn toeplitz_from_kernel(kernel: &DecayKernel, dim: usize) -> Result<CorrelationMatrix> {
    CorrelationMatrix::from_lag_fn(dim, |i| kernel.value(i))
}
