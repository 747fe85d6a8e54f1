//! Shared oracles for the integration suites. Everything here is an
//! independent route to the quantities the library computes: plain
//! quadrature, explicit covariance sums and direct per-obligor simulation.

#![allow(dead_code)]

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, fa, b, fb, fm);
    recurse(f, a, fa, b, fb, fm, whole, tol, 30)
}

/// Bivariate standard normal density.
pub fn bvn_density(x: f64, y: f64, rho: f64) -> f64 {
    let det = 1.0 - rho * rho;
    let q = (x * x + y * y - 2.0 * rho * x * y) / (2.0 * det);
    (-q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

/// 2-D adaptive quadrature of the bivariate normal density over
/// (-inf, h] x (-inf, k], the independent oracle for the CDF.
///
/// For |rho| near 1 the density is a narrow ridge along y = rho x; the
/// inner integral is clipped to 12 conditional standard deviations around
/// the ridge so the subdivision always samples inside the bump (the
/// clipped tail carries less than e^-70 of the slice mass).
pub fn bvn_cdf_quadrature(h: f64, k: f64, rho: f64, tol: f64) -> f64 {
    const LOWER: f64 = -9.0; // Phi(-9) ~ 1e-19, far below any tolerance here
    if h <= LOWER || k <= LOWER {
        return 0.0;
    }
    let sigma = (1.0 - rho * rho).sqrt().max(1e-8);
    let inner = |x: f64| -> f64 {
        let center = rho * x;
        let lo = LOWER.max(center - 12.0 * sigma);
        let hi = k.min(center + 12.0 * sigma);
        if hi <= lo {
            return 0.0;
        }
        adaptive_simpson(&|y| bvn_density(x, y, rho), lo, hi, tol * 0.05)
    };
    adaptive_simpson(&inner, LOWER, h, tol)
}

/// Standard normal density.
pub fn phi_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0f64, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Explicit covariance-matrix sum for V(Z(T)): loops every ordered pair of
/// the n*T default indicators and adds its covariance.
pub fn variance_covariance_sum(
    p: f64,
    rho_a: f64,
    kernel: &merton_core::DecayKernel,
    n: usize,
    t: usize,
) -> f64 {
    let pq = p * (1.0 - p);
    let f_same = merton_core::model::map_asset_to_default(p, rho_a).unwrap();
    let mut total = 0.0;
    for ti in 0..t {
        for oi in 0..n {
            for tj in 0..t {
                for oj in 0..n {
                    let cov = if ti == tj && oi == oj {
                        pq
                    } else if ti == tj {
                        pq * f_same
                    } else {
                        let d = kernel.value(ti.abs_diff(tj));
                        pq * merton_core::model::map_asset_to_default(p, rho_a * d).unwrap()
                    };
                    total += cov;
                }
            }
        }
    }
    total / ((n * t) as f64 * (n * t) as f64)
}

/// Geweke convergence z-score: mean of the first 10% of the chain against
/// the last 50%, with batch-means variances.
pub fn geweke_z(chain: &[f64]) -> f64 {
    let n = chain.len();
    let early = &chain[..n / 10];
    let late = &chain[n / 2..];
    let (me, ve) = batch_mean_var(early);
    let (ml, vl) = batch_mean_var(late);
    (me - ml) / (ve + vl).sqrt()
}

/// (mean, variance of the mean) with 20 batch means to absorb chain
/// autocorrelation.
pub fn batch_mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let n_batches = 20.min(n);
    let batch = n / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| x[b * batch..(b + 1) * batch].iter().sum::<f64>() / batch as f64)
        .collect();
    let var_between = means
        .iter()
        .map(|m| (m - mean).powi(2))
        .sum::<f64>()
        / (n_batches as f64 - 1.0)
        / n_batches as f64;
    (mean, var_between)
}

pub fn mean_and_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
