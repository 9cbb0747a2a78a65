//! Likelihood-free Bayesian inference engine.
//!
//! The pipeline: simulate a reference table of (model, parameter, summary)
//! rows from prior draws; estimate each parameter's marginal posterior with a
//! distributional random forest conditioned on the observed summaries; stitch
//! the marginals into a joint posterior with a meta-t copula fitted by maximum
//! likelihood; and read off means, quantiles, modes, and MLEs from the weighted
//! table. Model selection runs the same forest machinery on the model label.
//! Rejection-ABC baselines, benchmark/network generative models, and an
//! evaluation harness (exact-posterior oracles, weighted Kolmogorov–Smirnov
//! distances, replicated experiments) round out the crate.
//!
//! Modules mirror the pipeline stages:
//! - [`models`]: priors, parameter spaces, benchmark and network simulators
//! - [`netstats`]: graph type, descriptive statistics, change statistics, MPLE
//! - [`reftable`]: reference-table construction and persistence
//! - [`drf`]: distributional random forests (weights, CDFs, quantiles, classes)
//! - [`density`]: histogram and kernel density estimators, bandwidth selection
//! - [`copula`]: t-copula density, fitting, and meta-t posterior assembly
//! - [`inference`]: posterior reports, mode/MLE extraction, model selection
//! - [`rejection`]: nearest-neighbor rejection samplers and KDE point estimates
//! - [`eval`]: oracles, weighted KS tests, replicated-experiment driver
//! - [`wstats`]: weighted-sample helpers (ESS, moments, ECDF, quantiles)

pub(crate) mod container;
pub mod copula;
pub mod density;
pub mod drf;
pub mod eval;
pub mod inference;
pub mod models;
pub mod netstats;
pub mod reftable;
pub mod rejection;
pub mod rng;
pub mod wstats;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two containers that must agree in length or dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A parameter value violates its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A computation is undefined for the given input (degenerate sample,
    /// zero variance, empty support, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Maximum pseudo-likelihood estimation diverged (coefficients escaping to
    /// infinity or iteration cap hit).
    #[error("infinite MPLE: {0}")]
    InfiniteMple(String),
    /// A numeric routine failed to converge or produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Every candidate row was rejected or dropped.
    #[error("no usable rows: {0}")]
    Empty(String),
    /// Parsing a text input failed; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// A binary container was malformed; `offset` is the byte position.
    #[error("corrupt container at byte {offset}: {msg}")]
    Corrupt { offset: u64, msg: String },
    /// Wrapped I/O error with the path that caused it.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
