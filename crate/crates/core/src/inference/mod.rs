//! Estimation engine: Monte-Carlo marginal likelihood, MAP fitting under
//! uniform box priors, pseudo-marginal posterior sampling and WAIC/WBIC
//! model comparison.

mod likelihood;
mod mcmc;
mod nelder_mead;
mod transform;

pub use mcmc::{pseudo_marginal_mcmc, PosteriorDraw, PosteriorSample};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::path_seed;
use crate::model::{map_asset_to_default, DecayKernel, ModelParams};
use crate::sim::DefaultHistory;
use likelihood::PathLikelihood;
use nelder_mead::{minimize, NmOptions};
use transform::ParamSpace;

/// Kernel family being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Exponential,
    Power,
}

impl KernelFamily {
    pub fn make_kernel(&self, value: f64) -> Result<DecayKernel> {
        match self {
            KernelFamily::Exponential => DecayKernel::exponential(value),
            KernelFamily::Power => DecayKernel::power(value),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Exponential => "exponential",
            KernelFamily::Power => "power",
        }
    }
}

/// Fit settings: Monte-Carlo path count, the uniform-prior box (which the
/// optimizer and the chains never leave), multistart count and simplex
/// stopping rules.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub p_bounds: (f64, f64),
    pub rho_a_bounds: (f64, f64),
    pub theta_bounds: (f64, f64),
    pub gamma_bounds: (f64, f64),
    pub n_starts: usize,
    pub simplex_tol: f64,
    pub max_evals: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_paths: 4096,
            seed: 0,
            p_bounds: (1e-6, 0.5),
            rho_a_bounds: (0.0, 0.999),
            theta_bounds: (0.0, 0.999),
            gamma_bounds: (1e-3, 20.0),
            n_starts: 8,
            simplex_tol: 1e-6,
            max_evals: 2000,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::domain("n_paths must be >= 2"));
        }
        if self.n_starts == 0 {
            return Err(Error::domain("n_starts must be >= 1"));
        }
        if !(self.simplex_tol >= 0.0) || self.max_evals == 0 {
            return Err(Error::domain("invalid optimizer tolerances"));
        }
        Ok(())
    }
}

/// Monte-Carlo marginal log-likelihood with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McLogLik {
    pub log_likelihood: f64,
    pub std_error: f64,
    /// Every path underflowed: the data are impossible under the params.
    pub degenerate: bool,
}

/// ln P(k_1..k_T | params) averaged over `n_paths` factor paths, binomial
/// coefficients included. Deterministic for a given seed and thread count.
pub fn mc_log_likelihood(
    history: &DefaultHistory,
    params: &ModelParams,
    n_paths: usize,
    seed: u64,
) -> Result<McLogLik> {
    let engine = PathLikelihood::new(history, n_paths, seed)?;
    let eval = engine.evaluate(params, false)?;
    Ok(McLogLik {
        log_likelihood: eval.log_likelihood,
        std_error: eval.std_error,
        degenerate: eval.degenerate,
    })
}

/// Outcome of one multistart MAP fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub family: KernelFamily,
    pub params_hat: ModelParams,
    /// Reported default correlation f(rho_A_hat) at p_hat.
    pub rho_d_hat: f64,
    /// Log posterior at the optimum (uniform prior: the log-likelihood).
    pub log_posterior: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Best and median multistart optima and the spread of their optimizer
    /// locations as a fraction of the box, per the identifiability flag.
    pub multistart_best: f64,
    pub multistart_median: f64,
    pub multistart_param_spread: f64,
    pub non_identifiable: bool,
    pub waic: Option<f64>,
    pub wbic: Option<f64>,
}

/// Maximizes the Monte-Carlo likelihood over the box (MAP under the
/// uniform prior) with a multistarted simplex search in transformed
/// coordinates. All evaluations share one set of path normals, so the
/// surface the optimizer sees is deterministic and smooth in the
/// parameters.
pub fn map_fit(
    history: &DefaultHistory,
    family: KernelFamily,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    if history.is_empty() {
        return Err(Error::domain("map_fit: empty history"));
    }
    let space = ParamSpace::new(family, config)?;
    let engine = PathLikelihood::new(history, config.n_paths, config.seed)?;

    let objective = |psi: &[f64]| -> f64 {
        let triple = space.triple_from_free(psi);
        if !space.triple_in_box(triple) {
            return f64::INFINITY;
        }
        let params = match space.params_from_triple(triple) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        match engine.evaluate(&params, false) {
            Ok(eval) if eval.log_likelihood.is_finite() => -eval.log_likelihood,
            _ => f64::INFINITY,
        }
    };

    let starts = space.latin_hypercube(config.n_starts, path_seed(config.seed, u64::MAX - 7));
    let opts = NmOptions {
        tol: config.simplex_tol,
        max_evals: config.max_evals,
    };
    let outcomes: Vec<_> = starts
        .par_iter()
        .map(|start| {
            let step = vec![0.5; space.free_dim()];
            let mut f = |psi: &[f64]| objective(psi);
            if space.free_dim() == 0 {
                // fully pinned box: single evaluation
                let value = objective(&[]);
                return nelder_mead::NmResult {
                    x: vec![],
                    value,
                    evaluations: 1,
                    converged: true,
                };
            }
            minimize(&mut f, start, &step, opts)
        })
        .collect();

    let best_idx = (0..outcomes.len())
        .min_by(|&a, &b| outcomes[a].value.total_cmp(&outcomes[b].value))
        .expect("n_starts >= 1");
    let best = &outcomes[best_idx];
    if !best.value.is_finite() {
        return Err(Error::domain(
            "map_fit: no start produced a finite likelihood",
        ));
    }

    let mut sorted: Vec<f64> = outcomes.iter().map(|o| -o.value).collect();
    sorted.sort_by(f64::total_cmp);
    let multistart_median = sorted[sorted.len() / 2];
    let multistart_best = -best.value;

    // spread of start optima across the box, per free axis
    let axes = space.axes();
    let triples: Vec<[f64; 3]> = outcomes
        .iter()
        .filter(|o| o.value.is_finite())
        .map(|o| space.triple_from_free(&o.x))
        .collect();
    let multistart_param_spread = (0..3)
        .filter(|&i| !axes[i].is_pinned())
        .map(|i| {
            let lo = triples.iter().map(|t| t[i]).fold(f64::INFINITY, f64::min);
            let hi = triples
                .iter()
                .map(|t| t[i])
                .fold(f64::NEG_INFINITY, f64::max);
            (hi - lo) / (axes[i].hi - axes[i].lo)
        })
        .fold(0.0, f64::max);

    let triple_hat = space.triple_from_free(&best.x);
    let params_hat = space.params_from_triple(triple_hat)?;
    let rho_d_hat = map_asset_to_default(params_hat.p(), params_hat.rho_a())?;

    let all_defaults_zero = history.total_defaults() == 0;
    let flat_but_scattered =
        (multistart_best - multistart_median) < 0.5 && multistart_param_spread > 0.5;
    Ok(FitResult {
        family,
        params_hat,
        rho_d_hat,
        log_posterior: multistart_best,
        converged: best.converged,
        evaluations: outcomes.iter().map(|o| o.evaluations).sum(),
        multistart_best,
        multistart_median,
        multistart_param_spread,
        non_identifiable: all_defaults_zero || flat_but_scattered,
        waic: None,
        wbic: None,
    })
}

/// WAIC = -2 (lppd - p_waic) on per-year pointwise marginal likelihoods.
///
/// The pointwise unit is a year: pointwise likelihood of year t under one
/// draw is the path average of Binom(k_t; n_t, G(S_t)), i.e. the per-year
/// marginal. Draws carry these values from the chain; a sample built
/// without them is re-evaluated with `n_paths` fresh paths per draw.
pub fn waic(history: &DefaultHistory, sample: &PosteriorSample, n_paths: usize) -> Result<f64> {
    if sample.draws.len() < 2 {
        return Err(Error::domain("waic: need at least 2 posterior draws"));
    }
    let t_len = history.len();
    let n_draws = sample.draws.len();
    let pointwise: Vec<Vec<f64>> = sample
        .draws
        .par_iter()
        .enumerate()
        .map(|(idx, draw)| -> Result<Vec<f64>> {
            if draw.pointwise.len() == t_len {
                Ok(draw.pointwise.clone())
            } else {
                let engine = PathLikelihood::new(
                    history,
                    n_paths,
                    path_seed(sample.seed.wrapping_add(0x5741_1c00), idx as u64),
                )?;
                let eval = engine.evaluate(&draw.params, true)?;
                Ok(eval.pointwise.expect("requested pointwise"))
            }
        })
        .collect::<Result<_>>()?;

    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let s = n_draws as f64;
    for t in 0..t_len {
        let col: Vec<f64> = pointwise.iter().map(|pw| pw[t]).collect();
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::domain(format!(
                "waic: pointwise likelihood of year index {t} is zero under every draw"
            )));
        }
        let sum: f64 = col.iter().map(|&v| (v - max).exp()).sum();
        lppd += max + (sum / s).ln();
        let mean = col.iter().sum::<f64>() / s;
        p_waic += col.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0);
    }
    Ok(-2.0 * (lppd - p_waic))
}

/// WBIC: the mean full-history log-likelihood under the chain tempered at
/// beta = 1/log m (m = number of years), reported on the same -2 log scale
/// as WAIC.
pub fn wbic(
    history: &DefaultHistory,
    family: KernelFamily,
    config: &FitConfig,
    n_draws: usize,
) -> Result<f64> {
    let m = history.len();
    if m < 2 {
        return Err(Error::domain("wbic: need at least 2 years (log m > 0)"));
    }
    let beta = 1.0 / (m as f64).ln();
    let sample = pseudo_marginal_mcmc(history, family, config, n_draws, beta)?;
    let mean_ll = sample
        .draws
        .iter()
        .map(|d| d.log_likelihood)
        .sum::<f64>()
        / sample.draws.len() as f64;
    Ok(-2.0 * mean_ll)
}
