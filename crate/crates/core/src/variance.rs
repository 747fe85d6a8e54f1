//! Exact, bounded, Monte-Carlo and asymptotic variance of the pooled
//! default-rate estimator Z(T), and the finite-size scaling exponent that
//! diagnoses the super-normal transition of the power-decay kernel.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::path_seed;
use crate::model::{
    map_asset_to_default, tangent_slope_a, DecayKernel, ModelParams, SlopeMode,
};
use crate::sim::{estimator_z, simulate_panel};

/// Three-term decomposition of V(Z(T)) with its sandwich bounds.
///
/// `lower_bound`/`upper_bound` replace f(rho_A d_i) in the temporal term by
/// A rho_A d_i and f(rho_A) d_i respectively; the first two terms are shared.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VarianceBreakdown {
    /// p(1-p)/(nT): the pure binomial term.
    pub term_binomial: f64,
    /// p(1-p)(n-1) f(rho_A)/(nT): same-year default correlation.
    pub term_intra_year: f64,
    /// 2 p(1-p)/T^2 · sum_i f(rho_A d_i)(T-i): temporal correlation.
    pub term_temporal: f64,
    pub total: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

/// Prefix-sum cache of the temporal term for one (p, rho_A, kernel).
///
/// Evaluating V(Z(T)) needs one bivariate CDF per lag; the cache extends on
/// demand so V(T) and V(2T) (or a whole t-grid) share every evaluation.
#[derive(Debug, Clone)]
pub struct VarianceCurve {
    params: ModelParams,
    cohort: u64,
    rho_d: f64,
    slope_a: f64,
    /// cum_f[i] = sum_{j=1..i} f(rho_A d_j); index 0 is 0.
    cum_f: Vec<f64>,
    /// cum_jf[i] = sum_{j=1..i} j f(rho_A d_j).
    cum_jf: Vec<f64>,
    /// prefix sums of d_j and j d_j for the bounds.
    cum_d: Vec<f64>,
    cum_jd: Vec<f64>,
    /// Lag beyond which d_i underflowed to exactly zero (no further terms).
    saturated_at: Option<usize>,
}

impl VarianceCurve {
    pub fn new(params: &ModelParams, cohort: u64) -> Result<Self> {
        if cohort == 0 {
            return Err(Error::domain("cohort size n must be >= 1"));
        }
        let rho_d = map_asset_to_default(params.p(), params.rho_a())?;
        let slope_a = tangent_slope_a(params.p(), SlopeMode::Plackett)?;
        Ok(Self {
            params: *params,
            cohort,
            rho_d,
            slope_a,
            cum_f: vec![0.0],
            cum_jf: vec![0.0],
            cum_d: vec![0.0],
            cum_jd: vec![0.0],
            saturated_at: None,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Default correlation f(rho_A) at the stored p.
    pub fn rho_d(&self) -> f64 {
        self.rho_d
    }

    fn extend_to(&mut self, max_lag: usize) {
        if self.saturated_at.is_some() {
            return;
        }
        let from = self.cum_f.len();
        if from > max_lag {
            return;
        }
        let kernel = *self.params.kernel();
        let rho_a = self.params.rho_a();
        let p = self.params.p();
        // Chunked parallel evaluation of f at new lags; the sequential
        // prefix accumulation below keeps results independent of the
        // thread count.
        let new_f: Vec<(f64, f64)> = (from..=max_lag)
            .into_par_iter()
            .map(|lag| {
                let d = kernel.value(lag);
                let f = if d == 0.0 {
                    0.0
                } else {
                    map_asset_to_default(p, rho_a * d)
                        .expect("validated params produce valid mapping inputs")
                };
                (d, f)
            })
            .collect();
        for (offset, (d, f)) in new_f.into_iter().enumerate() {
            let lag = from + offset;
            let jl = lag as f64;
            self.cum_f.push(self.cum_f[lag - 1] + f);
            self.cum_jf.push(self.cum_jf[lag - 1] + jl * f);
            self.cum_d.push(self.cum_d[lag - 1] + d);
            self.cum_jd.push(self.cum_jd[lag - 1] + jl * d);
            if d == 0.0 {
                // every later lag is exactly zero for both kernel families
                self.saturated_at = Some(lag);
                break;
            }
        }
    }

    /// sum_{i=1}^{m} f(rho_A d_i)(T - i) via the prefix sums. Lags past a
    /// saturation point contribute exactly zero.
    fn weighted_sum(&self, cum: &[f64], cum_j: &[f64], horizon: u64) -> f64 {
        let m = ((horizon - 1) as usize).min(cum.len() - 1);
        horizon as f64 * cum[m] - cum_j[m]
    }

    /// Exact breakdown of V(Z(T)).
    pub fn breakdown(&mut self, horizon: u64) -> Result<VarianceBreakdown> {
        if horizon == 0 {
            return Err(Error::domain("horizon T must be >= 1"));
        }
        let p = self.params.p();
        let pq = p * (1.0 - p);
        let n = self.cohort as f64;
        let t = horizon as f64;
        let term_binomial = pq / (n * t);
        let term_intra_year = pq * (n - 1.0) * self.rho_d / (n * t);
        let (term_temporal, lower_temporal, upper_temporal) = if horizon == 1 {
            (0.0, 0.0, 0.0)
        } else {
            self.extend_to((horizon - 1) as usize);
            let scale = 2.0 * pq / (t * t);
            let wf = self.weighted_sum(&self.cum_f, &self.cum_jf, horizon);
            let wd = self.weighted_sum(&self.cum_d, &self.cum_jd, horizon);
            (
                scale * wf,
                scale * self.slope_a * self.params.rho_a() * wd,
                scale * self.rho_d * wd,
            )
        };
        let base = term_binomial + term_intra_year;
        Ok(VarianceBreakdown {
            term_binomial,
            term_intra_year,
            term_temporal,
            total: base + term_temporal,
            lower_bound: base + lower_temporal,
            upper_bound: base + upper_temporal,
        })
    }
}

/// One-shot exact variance; build a [`VarianceCurve`] instead when several
/// horizons share parameters.
pub fn variance_exact(params: &ModelParams, cohort: u64, horizon: u64) -> Result<VarianceBreakdown> {
    VarianceCurve::new(params, cohort)?.breakdown(horizon)
}

/// Monte-Carlo estimate of V(Z(T)) over independent simulated panels:
/// sample variance plus a moment-based standard error of that variance.
/// Deterministic for a given seed and any thread count.
pub fn variance_mc(
    params: &ModelParams,
    cohort: u64,
    horizon: u64,
    replicas: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if replicas < 2 {
        return Err(Error::domain("variance_mc needs at least 2 replicas"));
    }
    if horizon == 0 {
        return Err(Error::domain("horizon T must be >= 1"));
    }
    let cohorts = vec![cohort; horizon as usize];
    let zs: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let history = simulate_panel(params, &cohorts, path_seed(seed, r))
                .expect("validated inputs");
            estimator_z(&history).expect("nonempty history").z
        })
        .collect();
    let r = replicas as f64;
    let mean = zs.iter().sum::<f64>() / r;
    let m2 = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / r;
    let m4 = zs.iter().map(|z| (z - mean).powi(4)).sum::<f64>() / r;
    let sample_var = m2 * r / (r - 1.0);
    // Var(s^2) ~ (m4 - m2^2 (r-3)/(r-1)) / r
    let var_of_var = ((m4 - m2 * m2 * (r - 3.0) / (r - 1.0)) / r).max(0.0);
    Ok((sample_var, var_of_var.sqrt()))
}

/// Asymptotic regime of V(Z(T)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Exponential kernel: V ~ 1/T.
    Exponential,
    /// Power kernel with gamma > 1: normal 1/T convergence.
    PowerIntermediate,
    /// Power kernel at gamma = 1: V ~ log T / T.
    PowerCritical,
    /// Power kernel with gamma < 1: V ~ T^{-gamma}, slow convergence.
    PowerLongMemory,
}

/// Closed-form asymptotic approximation of V(Z(T)).
///
/// The temporal term uses the bracketing constant c in place of the exact
/// mapping; `c` defaults to the geometric mean of (A rho_A, rho_D), the two
/// ends of the sandwich. Exact computations never use c.
pub fn variance_asymptotic(
    params: &ModelParams,
    cohort: u64,
    horizon: u64,
    c: Option<f64>,
) -> Result<(f64, Regime)> {
    if horizon < 2 {
        return Err(Error::domain("asymptotic variance needs T >= 2"));
    }
    if cohort == 0 {
        return Err(Error::domain("cohort size n must be >= 1"));
    }
    let p = params.p();
    let pq = p * (1.0 - p);
    let n = cohort as f64;
    let t = horizon as f64;
    let rho_d = map_asset_to_default(p, params.rho_a())?;
    let slope_a = tangent_slope_a(p, SlopeMode::Plackett)?;
    let c = match c {
        Some(v) if v > 0.0 => v,
        Some(v) => {
            return Err(Error::domain(format!(
                "bracketing constant c must be positive, got {v}"
            )))
        }
        None => (slope_a * params.rho_a() * rho_d).sqrt(),
    };
    let base = pq / (n * t) + pq * (n - 1.0) * rho_d / (n * t);
    let two_pqc = 2.0 * pq * c;
    match *params.kernel() {
        DecayKernel::Exponential { theta } => {
            // exact geometric weighted sum: sum_{i=1}^{T-1} theta^i (T-i)
            let sum = if theta == 0.0 {
                0.0
            } else if theta == 1.0 {
                t * (t - 1.0) / 2.0
            } else {
                let m = t - 1.0;
                let thm = theta.powf(m);
                let s0 = theta * (1.0 - thm) / (1.0 - theta);
                let s1 = theta * (1.0 - (m + 1.0) * thm + m * thm * theta)
                    / ((1.0 - theta) * (1.0 - theta));
                t * s0 - s1
            };
            Ok((base + two_pqc * sum / (t * t), Regime::Exponential))
        }
        DecayKernel::Power { gamma } => {
            if gamma == 1.0 {
                let third = two_pqc * ((t + 1.0) * t.ln() - t + 2.0) / (t * t);
                Ok((base + third, Regime::PowerCritical))
            } else if gamma > 1.0 {
                let third = two_pqc * t.powf(-gamma) / (gamma - 1.0);
                Ok((base + third, Regime::PowerIntermediate))
            } else {
                let third = two_pqc * t.powf(-gamma) / ((1.0 - gamma) * (2.0 - gamma));
                Ok((base + third, Regime::PowerLongMemory))
            }
        }
    }
}

/// Finite-size scaling point: delta = log2(V(Z(T)) / V(Z(2T))).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingPoint {
    /// theta or gamma of the kernel the point was computed for.
    pub kernel_param: f64,
    pub horizon: u64,
    pub delta: f64,
}

/// Scaling exponent from the exact variance at T and 2T.
pub fn scaling_exponent(params: &ModelParams, cohort: u64, horizon: u64) -> Result<ScalingPoint> {
    if horizon < 2 {
        return Err(Error::domain("scaling exponent needs T >= 2"));
    }
    let mut curve = VarianceCurve::new(params, cohort)?;
    let v1 = curve.breakdown(horizon)?.total;
    let v2 = curve.breakdown(2 * horizon)?.total;
    Ok(ScalingPoint {
        kernel_param: params.kernel().param(),
        horizon,
        delta: (v1 / v2).log2(),
    })
}

/// delta as a function of gamma for the power kernel: the phase-diagram
/// sweep. One point per requested gamma, ready for CSV emission.
pub fn delta_curve(
    p: f64,
    rho_a: f64,
    gammas: &[f64],
    cohort: u64,
    horizon: u64,
) -> Result<Vec<ScalingPoint>> {
    if gammas.is_empty() {
        return Err(Error::domain("delta_curve needs at least one gamma"));
    }
    gammas
        .par_iter()
        .map(|&gamma| {
            let params = ModelParams::new(p, rho_a, DecayKernel::power(gamma)?)?;
            scaling_exponent(&params, cohort, horizon)
        })
        .collect()
}
