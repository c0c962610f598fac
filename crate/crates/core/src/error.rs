use thiserror::Error;

/// Which hypothesis of the product-form invariant law failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkewHypothesis {
    /// Some name-based correlation loading is nonzero.
    NameCorrelation,
    /// Rank-based variances do not grow linearly in rank.
    LinearVariance,
}

impl std::fmt::Display for SkewHypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkewHypothesis::NameCorrelation => f.write_str("name-based correlations are nonzero"),
            SkewHypothesis::LinearVariance => {
                f.write_str("rank-based variances do not grow linearly")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("stability condition violated: {0}")]
    Stability(String),

    #[error("skew symmetry hypothesis fails: {0}")]
    SkewSymmetry(SkewHypothesis),

    #[error("n = {n} exceeds the exact-enumeration cap {cap}; use the MCMC path")]
    Capacity { n: usize, cap: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{0} is unavailable for this run")]
    Unavailable(&'static str),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("path {path} aborted at step {step}: state left the finite range")]
    AbortedPath { path: usize, step: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
