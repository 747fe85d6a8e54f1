//! Pseudo-marginal random-walk Metropolis over the transformed parameter
//! space.
//!
//! Each proposal draws a fresh path seed for its Monte-Carlo likelihood
//! estimate while the current state keeps the estimate it was accepted
//! with; the chain then targets exactly the prior times the MC-averaged
//! likelihood. The proposal scale adapts toward a 0.2-0.5 acceptance rate
//! during a discarded warm-up and is frozen afterwards.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::path_seed;
use crate::inference::likelihood::PathLikelihood;
use crate::inference::transform::ParamSpace;
use crate::inference::{FitConfig, KernelFamily};
use crate::model::ModelParams;
use crate::sim::DefaultHistory;

/// One retained draw: parameters, the likelihood estimate the state was
/// accepted with, and its per-year pointwise log marginals (reused by WAIC).
#[derive(Debug, Clone)]
pub struct PosteriorDraw {
    pub params: ModelParams,
    pub log_likelihood: f64,
    pub pointwise: Vec<f64>,
}

/// Posterior (or tempered-posterior) sample from the pseudo-marginal chain.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub draws: Vec<PosteriorDraw>,
    pub acceptance_rate: f64,
    /// Inverse temperature: 1 targets the posterior, 1/log m is the WBIC
    /// temperature.
    pub beta: f64,
    pub seed: u64,
    pub n_paths: usize,
    /// Set when the post-warm-up acceptance rate fell below 5%.
    pub low_acceptance: bool,
}

const TARGET_ACCEPTANCE: f64 = 0.3;
const BASE_STEP: f64 = 0.4;

/// Runs the chain for `n_draws` retained draws at inverse temperature
/// `beta`. Deterministic for a given config seed.
pub fn pseudo_marginal_mcmc(
    history: &DefaultHistory,
    family: KernelFamily,
    config: &FitConfig,
    n_draws: usize,
    beta: f64,
) -> Result<PosteriorSample> {
    if n_draws < 100 {
        return Err(Error::domain("pseudo_marginal_mcmc: need n_draws >= 100"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!(
            "pseudo_marginal_mcmc: beta must be positive, got {beta}"
        )));
    }
    config.validate()?;
    let space = ParamSpace::new(family, config)?;
    if space.free_dim() == 0 {
        return Err(Error::domain(
            "pseudo_marginal_mcmc: every parameter is pinned",
        ));
    }
    let warmup = (n_draws / 4).max(200);

    let mut proposal_rng = ChaCha8Rng::seed_from_u64(path_seed(config.seed, u64::MAX - 1));
    // proposal counter feeds the per-proposal path seeds
    let mut proposal_index = 0u64;
    let eval_at = |triple: [f64; 3], idx: u64| -> Result<(f64, Vec<f64>, ModelParams)> {
        let params = space.params_from_triple(triple)?;
        let engine = PathLikelihood::new(history, config.n_paths, path_seed(config.seed, idx))?;
        let eval = engine.evaluate(&params, true)?;
        Ok((
            eval.log_likelihood,
            eval.pointwise.expect("requested pointwise"),
            params,
        ))
    };

    // start from the pooled default rate and box midpoints
    let pooled = history.total_defaults() as f64 / history.total_cohort() as f64;
    let axes = *space.axes();
    let p0 = pooled.clamp(
        axes[0].lo + 0.02 * (axes[0].hi - axes[0].lo),
        axes[0].hi - 0.02 * (axes[0].hi - axes[0].lo),
    );
    let rho0 = 0.5 * (axes[1].lo + axes[1].hi);
    let kern0 = match family {
        KernelFamily::Exponential => 0.5 * (axes[2].lo + axes[2].hi),
        // geometric midpoint suits the log scale
        KernelFamily::Power => (axes[2].lo * axes[2].hi).sqrt(),
    };
    let mut psi = space.free_from_triple([p0, rho0, kern0]);
    let (mut cur_ll, mut cur_pw, mut cur_params) =
        eval_at(space.triple_from_free(&psi), proposal_index)?;
    proposal_index += 1;
    let mut cur_log_jac = space.log_jacobian(&psi);

    let mut log_scale = 0.0f64;
    let mut accepted_post = 0usize;
    let mut draws = Vec::with_capacity(n_draws);

    for iter in 0..(warmup + n_draws) {
        let scale = BASE_STEP * log_scale.exp();
        let proposal: Vec<f64> = psi
            .iter()
            .map(|&v| v + scale * proposal_rng.sample::<f64, _>(StandardNormal))
            .collect();
        let triple = space.triple_from_free(&proposal);
        let mut accept = false;
        if space.triple_in_box(triple) {
            let (ll, pw, params) = eval_at(triple, proposal_index)?;
            proposal_index += 1;
            let log_jac = space.log_jacobian(&proposal);
            let log_alpha = beta * (ll - cur_ll) + log_jac - cur_log_jac;
            if log_alpha >= 0.0
                || proposal_rng.gen::<f64>().ln() < log_alpha
                || (cur_ll == f64::NEG_INFINITY && ll > f64::NEG_INFINITY)
            {
                psi = proposal;
                cur_ll = ll;
                cur_pw = pw;
                cur_params = params;
                cur_log_jac = log_jac;
                accept = true;
            }
        } else {
            // out of the prior box: rejected without spending a likelihood
            proposal_index += 1;
        }

        if iter < warmup {
            // Robbins-Monro on the log step size toward the target rate
            let gain = 1.0 / (1.0 + iter as f64 / 20.0).powf(0.6);
            log_scale += gain * ((accept as u8 as f64) - TARGET_ACCEPTANCE);
            log_scale = log_scale.clamp(-8.0, 4.0);
        } else {
            accepted_post += accept as usize;
            draws.push(PosteriorDraw {
                params: cur_params,
                log_likelihood: cur_ll,
                pointwise: cur_pw.clone(),
            });
        }
    }

    let acceptance_rate = accepted_post as f64 / n_draws as f64;
    Ok(PosteriorSample {
        draws,
        acceptance_rate,
        beta,
        seed: config.seed,
        n_paths: config.n_paths,
        low_acceptance: acceptance_rate < 0.05,
    })
}
