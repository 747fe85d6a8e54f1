//! Forward simulation of yearly default-count panels and the pooled
//! default-rate estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{path_seed, PathSampler};
use crate::model::{conditional_pd, ModelParams};

/// Jitter cap used when factoring kernel matrices for simulation; both
/// kernel families stay PSD up to rounding, so a tiny cap suffices.
pub const DEFAULT_MAX_JITTER: f64 = 1e-8;

/// One observed year: cohort size `n` and default count `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRecord {
    pub year: i32,
    pub n: u64,
    pub k: u64,
}

/// Yearly default-count panel. Years are strictly increasing and
/// contiguous, so the lag between two rows is their index distance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefaultHistory {
    rows: Vec<YearRecord>,
}

impl DefaultHistory {
    pub fn new(rows: Vec<YearRecord>) -> Result<Self> {
        for row in &rows {
            if row.n == 0 {
                return Err(Error::InvalidHistory(format!(
                    "year {}: cohort size must be >= 1",
                    row.year
                )));
            }
            if row.k > row.n {
                return Err(Error::InvalidHistory(format!(
                    "year {}: k = {} exceeds n = {}",
                    row.year, row.k, row.n
                )));
            }
        }
        for pair in rows.windows(2) {
            let gap = i64::from(pair[1].year) - i64::from(pair[0].year);
            if gap == 0 {
                return Err(Error::InvalidHistory(format!(
                    "duplicate year {}",
                    pair[0].year
                )));
            }
            if gap < 0 {
                return Err(Error::InvalidHistory(format!(
                    "years out of order at {}",
                    pair[1].year
                )));
            }
            if gap > 1 {
                return Err(Error::InvalidHistory(format!(
                    "missing year {} between {} and {}",
                    pair[0].year + 1,
                    pair[0].year,
                    pair[1].year
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[YearRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_defaults(&self) -> u64 {
        self.rows.iter().map(|r| r.k).sum()
    }

    pub fn total_cohort(&self) -> u64 {
        self.rows.iter().map(|r| r.n).sum()
    }
}

/// Pooled estimator and per-year default rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelStats {
    /// Z(T) = sum_t k_t / sum_t n_t.
    pub z: f64,
    pub per_year_rates: Vec<f64>,
}

/// The pooled default-rate estimator Z(T). Heterogeneous cohort sizes use
/// the pooled ratio.
pub fn estimator_z(history: &DefaultHistory) -> Result<PanelStats> {
    if history.is_empty() {
        return Err(Error::domain("estimator_z: empty history"));
    }
    let z = history.total_defaults() as f64 / history.total_cohort() as f64;
    let per_year_rates = history
        .rows()
        .iter()
        .map(|r| r.k as f64 / r.n as f64)
        .collect();
    Ok(PanelStats { z, per_year_rates })
}

/// Simulates one panel: a single correlated factor path, then one
/// binomial default count per year given the path. Obligors within a year
/// are exchangeable given S_t, so per-obligor draws are never materialized.
/// Deterministic for a given seed.
pub fn simulate_panel(
    params: &ModelParams,
    cohort_sizes: &[u64],
    seed: u64,
) -> Result<DefaultHistory> {
    if cohort_sizes.is_empty() {
        return Err(Error::domain("simulate_panel: empty cohort list"));
    }
    if let Some(&bad) = cohort_sizes.iter().find(|&&n| n == 0) {
        return Err(Error::domain(format!(
            "simulate_panel: cohort sizes must be >= 1, got {bad}"
        )));
    }
    let horizon = cohort_sizes.len();
    let sampler = PathSampler::for_kernel(params.kernel(), horizon, DEFAULT_MAX_JITTER)?;
    let path = sampler.sample(path_seed(seed, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, 1));
    let rows = cohort_sizes
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            let g = conditional_pd(params, path[t]).clamp(0.0, 1.0);
            let k = Binomial::new(n, g)
                .expect("probability clamped to [0,1]")
                .sample(&mut rng);
            YearRecord {
                year: (t + 1) as i32,
                n,
                k,
            }
        })
        .collect();
    DefaultHistory::new(rows)
}

/// Sample correlation of per-year default rates at the given lag, pooled
/// over every history in the slice.
///
/// This is a diagnostic: across replicas of simulated panels it tracks a
/// rate-level analogue of the model's C(t), not an estimator of
/// f(rho_A d_t) itself. Returns NaN when the rate variance is degenerate.
pub fn empirical_autocorr(histories: &[DefaultHistory], lag: usize) -> Result<f64> {
    if histories.is_empty() {
        return Err(Error::domain("empirical_autocorr: no histories"));
    }
    if lag == 0 {
        return Err(Error::domain("empirical_autocorr: lag must be >= 1"));
    }
    if let Some(short) = histories.iter().find(|h| h.len() <= lag) {
        return Err(Error::domain(format!(
            "empirical_autocorr: lag {lag} needs more than {} rows",
            short.len()
        )));
    }
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy, mut count) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0usize);
    for history in histories {
        let rates: Vec<f64> = history
            .rows()
            .iter()
            .map(|r| r.k as f64 / r.n as f64)
            .collect();
        for t in 0..rates.len() - lag {
            let (x, y) = (rates[t], rates[t + lag]);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            count += 1;
        }
    }
    let m = count as f64;
    let vx = sxx / m - (sx / m).powi(2);
    let vy = syy / m - (sy / m).powi(2);
    let cov = sxy / m - sx / m * (sy / m);
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(f64::NAN);
    }
    Ok(cov / (vx * vy).sqrt())
}
