//! Default-portfolio modeling under the single-factor Merton model with a
//! temporally correlated systematic factor.
//!
//! The crate covers the full pipeline: Gaussian primitives
//! ([`gaussian`]), the asset/default correlation mapping ([`model`]),
//! exact and asymptotic variance of the pooled default-rate estimator
//! including its finite-size scaling exponent ([`variance`]), forward
//! panel simulation ([`sim`]), and Monte-Carlo likelihood inference with
//! MAP fitting and WAIC/WBIC model comparison ([`inference`]).

pub mod error;
pub mod gaussian;
pub mod inference;
pub mod model;
pub mod sim;
pub mod variance;

pub use error::{Error, Result};
pub use inference::{FitConfig, FitResult, KernelFamily, PosteriorSample};
pub use model::{DecayKernel, ModelParams, SlopeMode};
pub use sim::{DefaultHistory, PanelStats, YearRecord};
pub use variance::{ScalingPoint, VarianceBreakdown, VarianceCurve};
