use thiserror::Error;

use crate::roots::RootSet;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid claim distribution: {0}")]
    InvalidDistribution(String),

    #[error("pgf evaluated outside its radius of convergence: |s| = {modulus} >= {radius}")]
    Domain { modulus: f64, radius: f64 },

    #[error("net profit condition violated: E[X] = {mean} is not below the premium rate {kappa}")]
    NetProfitViolation { mean: f64, kappa: u32 },

    #[error("support shift {shift} is not below the premium rate {kappa}")]
    Reduction { shift: usize, kappa: u32 },

    #[error("expected {expected} roots in the closed unit disk (excluding s = 1), found {found}: {detail}")]
    RootCountMismatch {
        expected: usize,
        found: usize,
        detail: String,
    },

    #[error("root finder did not converge after {iterations} iterations (worst backward error {backward_error:e})")]
    ConvergenceFailure {
        iterations: usize,
        backward_error: f64,
    },

    #[error("root clustering changes within a factor of 10 of the cluster tolerance")]
    AmbiguousCluster {
        primary: Box<RootSet>,
        alternative: Box<RootSet>,
    },

    #[error("linear system for the boundary probabilities is numerically singular (pivot ratio {pivot_ratio:e})")]
    SingularSystem { pivot_ratio: f64 },

    #[error("solution has imaginary part {leak:e} above tolerance {tol:e}")]
    ImagLeak { leak: f64, tol: f64 },

    #[error("closed form requires simple roots")]
    MultipleRootsUnsupported,

    #[error("negative probability pi_{index} = {value:e}")]
    NegativePi { index: usize, value: f64 },

    #[error("survival recurrence left [0, 1] at u = {u}: phi = {value:e}")]
    RecurrenceBlowup { u: usize, value: f64 },

    #[error("generating function evaluated near a pole: |G_X(s) - s^kappa| = {gap:e}")]
    NearPole { gap: f64 },

    #[error("special generating-function form not available for kappa = {0}")]
    UnsupportedKappa(u32),

    #[error("recurrent-sequence ratios did not settle: Cauchy gap {gap:e} after {n} terms")]
    NonConvergence { gap: f64, n: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
