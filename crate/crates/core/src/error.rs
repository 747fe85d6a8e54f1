use thiserror::Error;

/// Errors produced by the model, sampling and inference layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Cholesky factorization failed even at the largest permitted jitter.
    #[error(
        "matrix of dim {dim} is not positive semidefinite: factorization still failed at \
         jitter {last_jitter:e} (cap {max_jitter:e})"
    )]
    NotPositiveSemidefinite {
        dim: usize,
        last_jitter: f64,
        max_jitter: f64,
    },

    /// A default history violated its structural invariants.
    #[error("invalid history: {0}")]
    InvalidHistory(String),

    /// Every Monte-Carlo path underflowed: the data are impossible under the
    /// supplied parameters.
    #[error("degenerate likelihood: all {n_paths} path likelihoods underflowed to -inf")]
    DegenerateLikelihood { n_paths: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
