//! Bounded parameter space for (p, rho_A, kernel parameter) with
//! unconstrained transforms: logit scaled to the box for p, rho_A and
//! theta, log for gamma. An axis whose bounds coincide is pinned and drops
//! out of the free coordinates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inference::{FitConfig, KernelFamily};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Scale {
    Logit,
    Log,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl Axis {
    pub fn is_pinned(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }

    pub fn to_unconstrained(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Logit => {
                let u = (x - self.lo) / (self.hi - self.lo);
                (u / (1.0 - u)).ln()
            }
            Scale::Log => x.ln(),
        }
    }

    pub fn from_unconstrained(&self, psi: f64) -> f64 {
        match self.scale {
            Scale::Logit => self.lo + (self.hi - self.lo) * sigmoid(psi),
            Scale::Log => psi.exp(),
        }
    }

    /// log |dx/dpsi|, the density correction for sampling in psi space.
    pub fn log_jacobian(&self, psi: f64) -> f64 {
        match self.scale {
            Scale::Logit => (self.hi - self.lo).ln() - softplus(psi) - softplus(-psi),
            Scale::Log => psi,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// The fit box for one kernel family: axes [p, rho_A, kernel parameter].
#[derive(Debug, Clone)]
pub(crate) struct ParamSpace {
    family: KernelFamily,
    axes: [Axis; 3],
    free: Vec<usize>,
}

impl ParamSpace {
    pub fn new(family: KernelFamily, config: &FitConfig) -> Result<Self> {
        let kernel_bounds = match family {
            KernelFamily::Exponential => config.theta_bounds,
            KernelFamily::Power => config.gamma_bounds,
        };
        let axes = [
            Axis {
                lo: config.p_bounds.0,
                hi: config.p_bounds.1,
                scale: Scale::Logit,
            },
            Axis {
                lo: config.rho_a_bounds.0,
                hi: config.rho_a_bounds.1,
                scale: Scale::Logit,
            },
            Axis {
                lo: kernel_bounds.0,
                hi: kernel_bounds.1,
                scale: match family {
                    KernelFamily::Exponential => Scale::Logit,
                    KernelFamily::Power => Scale::Log,
                },
            },
        ];
        for (name, axis) in ["p", "rho_A", "kernel parameter"].iter().zip(&axes) {
            if !(axis.lo.is_finite() && axis.hi.is_finite() && axis.lo <= axis.hi) {
                return Err(Error::domain(format!(
                    "invalid bounds for {name}: [{}, {}]",
                    axis.lo, axis.hi
                )));
            }
            if axis.scale == Scale::Log && !axis.is_pinned() && axis.lo <= 0.0 {
                return Err(Error::domain(format!(
                    "log-scaled {name} needs a positive lower bound, got {}",
                    axis.lo
                )));
            }
        }
        if !(axes[0].lo > 0.0 && axes[0].hi < 1.0) {
            return Err(Error::domain("p bounds must lie inside (0,1)"));
        }
        if !(axes[1].lo >= 0.0 && axes[1].hi < 1.0) {
            return Err(Error::domain("rho_A bounds must lie inside [0,1)"));
        }
        let free = (0..3).filter(|&i| !axes[i].is_pinned()).collect();
        Ok(Self { family, axes, free })
    }

    pub fn free_dim(&self) -> usize {
        self.free.len()
    }

    pub fn axes(&self) -> &[Axis; 3] {
        &self.axes
    }

    /// Natural-space triple (p, rho_A, kernel param) from free coordinates.
    pub fn triple_from_free(&self, psi: &[f64]) -> [f64; 3] {
        let mut x = [self.axes[0].lo, self.axes[1].lo, self.axes[2].lo];
        for (j, &i) in self.free.iter().enumerate() {
            x[i] = self.axes[i].from_unconstrained(psi[j]);
        }
        x
    }

    pub fn free_from_triple(&self, triple: [f64; 3]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| self.axes[i].to_unconstrained(triple[i]))
            .collect()
    }

    /// True when every coordinate (pinned ones trivially) is inside the box.
    pub fn triple_in_box(&self, triple: [f64; 3]) -> bool {
        (0..3).all(|i| self.axes[i].contains(triple[i]))
    }

    pub fn log_jacobian(&self, psi: &[f64]) -> f64 {
        self.free
            .iter()
            .enumerate()
            .map(|(j, &i)| self.axes[i].log_jacobian(psi[j]))
            .sum()
    }

    pub fn params_from_triple(&self, triple: [f64; 3]) -> Result<ModelParams> {
        let kernel = self.family.make_kernel(triple[2])?;
        ModelParams::new(triple[0], triple[1], kernel)
    }

    /// Latin-hypercube start points in free coordinates. Log-scaled axes
    /// stratify in log space so wide boxes spread across magnitudes.
    pub fn latin_hypercube(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.free_dim();
        let mut strata: Vec<Vec<usize>> = vec![(0..count).collect(); dim];
        for column in &mut strata {
            // Fisher-Yates
            for i in (1..column.len()).rev() {
                let j = rng.gen_range(0..=i);
                column.swap(i, j);
            }
        }
        (0..count)
            .map(|row| {
                self.free
                    .iter()
                    .enumerate()
                    .map(|(j, &i)| {
                        let u = (strata[j][row] as f64 + rng.gen_range(0.05..0.95))
                            / count as f64;
                        let axis = self.axes[i];
                        let x = match axis.scale {
                            Scale::Logit => axis.lo + (axis.hi - axis.lo) * u,
                            Scale::Log => {
                                (axis.lo.ln() + (axis.hi.ln() - axis.lo.ln()) * u).exp()
                            }
                        };
                        axis.to_unconstrained(x)
                    })
                    .collect()
            })
            .collect()
    }
}
