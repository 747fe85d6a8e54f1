//! Monte-Carlo marginal likelihood of a default history.
//!
//! The joint probability of the observed counts given (p, rho_A, kernel)
//! integrates the product of per-year binomial pmfs over the latent factor
//! path. It is approximated by an importance-weighted average over
//! simulated paths: paths are drawn from the Gaussian that conditions the
//! prior N(0, Sigma) on per-year pseudo-observations of the factor implied
//! by the observed default rates, and reweighted by prior/proposal. The
//! estimate is unbiased for any proposal, which keeps pseudo-marginal
//! chains exact; the tilting is what makes long, large-cohort panels
//! tractable (a plain prior average needs astronomically many paths once
//! the per-year rates pin the factor to a narrow tube).
//!
//! With rho_A = 0 the data carry no information about the factor, the
//! proposal collapses to the prior with unit weights, and the result is
//! the exact binomial likelihood independent of path count and seed.
//!
//! The path normals are drawn once per engine (keyed by seed and path
//! index), so an optimizer evaluating many parameter points sees a surface
//! that is smooth in the parameters (common random numbers). Reductions
//! run in a fixed order, making results bit-identical for any thread
//! count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{log_phi, path_seed, standard_normals, std_normal_pdf, std_normal_quantile};
use crate::model::{toeplitz_from_kernel, ModelParams};
use crate::sim::{DefaultHistory, DEFAULT_MAX_JITTER};

/// Paths per rayon task; small enough to balance few cores, large enough
/// to amortize the scratch buffers.
const PATH_CHUNK: usize = 64;

/// Variance inflation of the pseudo-observations, slightly above the
/// Laplace match so the proposal stays a little wider than the target.
const PROPOSAL_INFLATION: f64 = 1.1;

#[derive(Debug, Clone)]
pub(crate) struct LikEval {
    /// ln P(k_1..k_T | params), including the binomial coefficients.
    pub log_likelihood: f64,
    /// Delta-method standard error of the log of the weighted path average.
    pub std_error: f64,
    /// True when every path underflowed; `log_likelihood` is then -inf.
    pub degenerate: bool,
    /// Per-year log marginal likelihoods (for WAIC), when requested.
    pub pointwise: Option<Vec<f64>>,
}

pub(crate) struct PathLikelihood<'h> {
    history: &'h DefaultHistory,
    n_paths: usize,
    /// Path-major standard normals, n_paths x T.
    z: Vec<f64>,
    k: Vec<f64>,
    n_minus_k: Vec<f64>,
    /// Rate-smoothed per-year default frequencies (k+1/2)/(n+1).
    smoothed: Vec<f64>,
    /// ln C(n_t, k_t) per year and their total.
    ln_binom: Vec<f64>,
    ln_binom_total: f64,
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma((n + 1) as f64) - libm::lgamma((k + 1) as f64)
        - libm::lgamma((n - k + 1) as f64)
}

// --- small dense helpers on row-major lower-triangular storage ---

/// In-place lower Cholesky; false when a pivot is not positive.
fn chol_in_place(a: &mut [f64], t: usize) -> bool {
    for j in 0..t {
        let mut diag = a[j * t + j];
        for k in 0..j {
            diag -= a[j * t + k] * a[j * t + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return false;
        }
        let diag = diag.sqrt();
        a[j * t + j] = diag;
        for i in (j + 1)..t {
            let mut v = a[i * t + j];
            for k in 0..j {
                v -= a[i * t + k] * a[j * t + k];
            }
            a[i * t + j] = v / diag;
        }
    }
    for i in 0..t {
        for j in (i + 1)..t {
            a[i * t + j] = 0.0;
        }
    }
    true
}

/// x := L^{-1} x.
fn solve_lower(l: &[f64], t: usize, x: &mut [f64]) {
    for i in 0..t {
        let mut v = x[i];
        for j in 0..i {
            v -= l[i * t + j] * x[j];
        }
        x[i] = v / l[i * t + i];
    }
}

/// x := L^{-T} x.
fn solve_lower_transpose(l: &[f64], t: usize, x: &mut [f64]) {
    for i in (0..t).rev() {
        let mut v = x[i];
        for j in (i + 1)..t {
            v -= l[j * t + i] * x[j];
        }
        x[i] = v / l[i * t + i];
    }
}

/// Per-evaluation Gaussian machinery shared by every path.
struct Proposal {
    t: usize,
    /// Cholesky factor of the prior covariance Sigma.
    l_sigma: Vec<f64>,
    /// Cholesky factor of the proposal precision P = Sigma^{-1} + V^{-1}.
    l_prec: Vec<f64>,
    mean: Vec<f64>,
    /// -(ln det Sigma + ln det P)/2, the constant part of the log weight.
    log_weight_const: f64,
}

impl Proposal {
    /// `pseudo_obs[t]` is the factor value implied by the year-t rate and
    /// `pseudo_var[t]` its (inflated) delta-method variance; infinite
    /// variance (rho_A -> 0) turns a year into no information.
    fn build(l_sigma: Vec<f64>, pseudo_obs: &[f64], pseudo_var: &[f64]) -> Result<Self> {
        let t = pseudo_obs.len();
        // Sigma^{-1} from the factor: solve for each unit vector
        let mut sigma_inv = vec![0.0; t * t];
        let mut col = vec![0.0; t];
        for j in 0..t {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            solve_lower(&l_sigma, t, &mut col);
            solve_lower_transpose(&l_sigma, t, &mut col);
            for i in 0..t {
                sigma_inv[i * t + j] = col[i];
            }
        }
        let log_det_sigma: f64 = (0..t).map(|i| 2.0 * l_sigma[i * t + i].ln()).sum();

        let mut prec = sigma_inv;
        for i in 0..t {
            if pseudo_var[i].is_finite() {
                prec[i * t + i] += 1.0 / pseudo_var[i];
            }
        }
        // rhs of P m = V^{-1} z
        let mut mean: Vec<f64> = (0..t)
            .map(|i| {
                if pseudo_var[i].is_finite() {
                    pseudo_obs[i] / pseudo_var[i]
                } else {
                    0.0
                }
            })
            .collect();
        let mut l_prec = prec;
        let mut jitter = 0.0f64;
        loop {
            let mut attempt = l_prec.clone();
            for i in 0..t {
                attempt[i * t + i] += jitter;
            }
            if chol_in_place(&mut attempt, t) {
                l_prec = attempt;
                break;
            }
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
            if jitter > 1.0 {
                return Err(Error::domain(
                    "proposal precision matrix is not positive definite",
                ));
            }
        }
        let log_det_prec: f64 = (0..t).map(|i| 2.0 * l_prec[i * t + i].ln()).sum();
        solve_lower(&l_prec, t, &mut mean);
        solve_lower_transpose(&l_prec, t, &mut mean);
        Ok(Self {
            t,
            l_sigma,
            l_prec,
            mean,
            log_weight_const: -0.5 * (log_det_sigma + log_det_prec),
        })
    }

    /// Path from the proposal: s = m + L_P^{-T} u, plus the data-free part
    /// of its log importance weight ln[N(s; 0, Sigma) / N(s; m, C)].
    fn sample(&self, u: &[f64], s: &mut [f64], scratch: &mut [f64]) -> f64 {
        let t = self.t;
        s.copy_from_slice(u);
        solve_lower_transpose(&self.l_prec, t, s);
        let mut u_sq = 0.0;
        for i in 0..t {
            u_sq += u[i] * u[i];
            s[i] += self.mean[i];
        }
        scratch.copy_from_slice(s);
        solve_lower(&self.l_sigma, t, scratch);
        let q_sigma: f64 = scratch.iter().map(|v| v * v).sum();
        self.log_weight_const + 0.5 * (u_sq - q_sigma)
    }
}

impl<'h> PathLikelihood<'h> {
    pub fn new(history: &'h DefaultHistory, n_paths: usize, seed: u64) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::domain("mc_log_likelihood: empty history"));
        }
        if n_paths < 2 {
            return Err(Error::domain("mc_log_likelihood: need at least 2 paths"));
        }
        let t_len = history.len();
        let mut z = vec![0.0; n_paths * t_len];
        z.par_chunks_mut(t_len).enumerate().for_each(|(i, row)| {
            row.copy_from_slice(&standard_normals(path_seed(seed, i as u64), t_len));
        });
        let k: Vec<f64> = history.rows().iter().map(|r| r.k as f64).collect();
        let n_minus_k: Vec<f64> = history.rows().iter().map(|r| (r.n - r.k) as f64).collect();
        let smoothed: Vec<f64> = history
            .rows()
            .iter()
            .map(|r| (r.k as f64 + 0.5) / (r.n as f64 + 1.0))
            .collect();
        let ln_binom: Vec<f64> = history.rows().iter().map(|r| ln_choose(r.n, r.k)).collect();
        let ln_binom_total = ln_binom.iter().sum();
        Ok(Self {
            history,
            n_paths,
            z,
            k,
            n_minus_k,
            smoothed,
            ln_binom,
            ln_binom_total,
        })
    }

    fn build_proposal(&self, params: &ModelParams) -> Result<Proposal> {
        let t_len = self.history.len();
        let rho = params.rho_a();
        let y = params.threshold();
        let sigma = toeplitz_from_kernel(params.kernel(), t_len)?;
        let factor = crate::gaussian::cholesky_psd(&sigma, DEFAULT_MAX_JITTER)?;
        let mut l_sigma = vec![0.0; t_len * t_len];
        for i in 0..t_len {
            for j in 0..=i {
                l_sigma[i * t_len + j] = factor.entry(i, j);
            }
        }
        let mut pseudo_obs = vec![0.0; t_len];
        let mut pseudo_var = vec![f64::INFINITY; t_len];
        let sqrt_rho = rho.sqrt();
        let sqrt_1m = (1.0 - rho).sqrt();
        for (t, row) in self.history.rows().iter().enumerate() {
            let rate = self.smoothed[t];
            let q = std_normal_quantile(rate)?;
            pseudo_obs[t] = (y - sqrt_1m * q) / sqrt_rho;
            let dens = std_normal_pdf(q);
            pseudo_var[t] = PROPOSAL_INFLATION * (1.0 - rho) / rho * rate * (1.0 - rate)
                / (row.n as f64 * dens * dens);
        }
        Proposal::build(l_sigma, &pseudo_obs, &pseudo_var)
    }

    pub fn evaluate(&self, params: &ModelParams, want_pointwise: bool) -> Result<LikEval> {
        let t_len = self.history.len();
        let rho = params.rho_a();
        let y = params.threshold();

        // per-path log weights: binomial cores plus prior/proposal ratio
        let mut ell = vec![0.0f64; self.n_paths];
        // per-(path, year) full log pmfs plus the path ratio, for WAIC
        let mut pmf = if want_pointwise {
            vec![0.0f64; self.n_paths * t_len]
        } else {
            Vec::new()
        };

        if rho == 0.0 {
            // the factor drops out: every path gives the exact binomial value
            let lp = params.p().ln();
            let l1mp = (-params.p()).ln_1p();
            let core: f64 = (0..t_len)
                .map(|t| self.k[t] * lp + self.n_minus_k[t] * l1mp)
                .sum();
            ell.iter_mut().for_each(|e| *e = core);
            if want_pointwise {
                pmf.par_chunks_mut(t_len).for_each(|row| {
                    for t in 0..t_len {
                        row[t] = self.ln_binom[t] + self.k[t] * lp + self.n_minus_k[t] * l1mp;
                    }
                });
            }
        } else {
            let proposal = self.build_proposal(params)?;
            let sqrt_rho = rho.sqrt();
            let inv_sqrt = 1.0 / (1.0 - rho).sqrt();
            let work = |i0: usize, ell_chunk: &mut [f64], pmf_chunk: Option<&mut [f64]>| {
                let mut s = vec![0.0f64; t_len];
                let mut scratch = vec![0.0f64; t_len];
                let mut pmf_chunk = pmf_chunk;
                for (off, e) in ell_chunk.iter_mut().enumerate() {
                    let i = i0 + off;
                    let ln_ratio = proposal.sample(
                        &self.z[i * t_len..(i + 1) * t_len],
                        &mut s,
                        &mut scratch,
                    );
                    let mut acc = ln_ratio;
                    for t in 0..t_len {
                        let arg = (y - sqrt_rho * s[t]) * inv_sqrt;
                        let mut lpmf = 0.0;
                        if self.k[t] > 0.0 {
                            lpmf += self.k[t] * log_phi(arg);
                        }
                        if self.n_minus_k[t] > 0.0 {
                            lpmf += self.n_minus_k[t] * log_phi(-arg);
                        }
                        acc += lpmf;
                        if let Some(rows) = pmf_chunk.as_deref_mut() {
                            rows[off * t_len + t] = self.ln_binom[t] + lpmf + ln_ratio;
                        }
                    }
                    *e = acc;
                }
            };
            if want_pointwise {
                ell.par_chunks_mut(PATH_CHUNK)
                    .zip(pmf.par_chunks_mut(PATH_CHUNK * t_len))
                    .enumerate()
                    .for_each(|(ci, (ell_chunk, pmf_chunk))| {
                        work(ci * PATH_CHUNK, ell_chunk, Some(pmf_chunk));
                    });
            } else {
                ell.par_chunks_mut(PATH_CHUNK)
                    .enumerate()
                    .for_each(|(ci, ell_chunk)| {
                        work(ci * PATH_CHUNK, ell_chunk, None);
                    });
            }
        }

        // sequential log-mean-exp in path order
        let max = ell.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Ok(LikEval {
                log_likelihood: f64::NEG_INFINITY,
                std_error: f64::NAN,
                degenerate: true,
                pointwise: want_pointwise.then(|| vec![f64::NEG_INFINITY; t_len]),
            });
        }
        let weights: Vec<f64> = ell.iter().map(|&e| (e - max).exp()).collect();
        let sum_w: f64 = weights.iter().sum();
        let nf = self.n_paths as f64;
        let mean_w = sum_w / nf;
        let log_likelihood = self.ln_binom_total + max + mean_w.ln();
        let var_w = weights.iter().map(|&w| (w - mean_w).powi(2)).sum::<f64>() / (nf - 1.0);
        let std_error = (var_w.sqrt() / mean_w) / nf.sqrt();

        let pointwise = want_pointwise.then(|| {
            (0..t_len)
                .map(|t| {
                    let col_max = (0..self.n_paths)
                        .map(|i| pmf[i * t_len + t])
                        .fold(f64::NEG_INFINITY, f64::max);
                    if col_max == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    let s: f64 = (0..self.n_paths)
                        .map(|i| (pmf[i * t_len + t] - col_max).exp())
                        .sum();
                    col_max + (s / nf).ln()
                })
                .collect()
        });

        Ok(LikEval {
            log_likelihood,
            std_error,
            degenerate: false,
            pointwise,
        })
    }
}
