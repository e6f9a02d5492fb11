use thiserror::Error;

/// Errors produced by the inference library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dense oracle refused: dimension {dim} exceeds cap {cap}")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("rank-deficient design matrix; deficient columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("innovation covariance is not positive definite at frequency index {0}")]
    InnovationNotPositiveDefinite(usize),

    #[error("predicted covariance is singular at frequency index {0}")]
    SingularPredictedCovariance(usize),

    #[error("likelihood evaluation failed at rho = {rho:?}: {source}")]
    Likelihood { rho: Vec<f64>, source: Box<Error> },

    #[error("smoothing failed at rho = {rho:?}: {source}")]
    Smoothing { rho: Vec<f64>, source: Box<Error> },

    #[error("degenerate particle cloud: every weight underflowed")]
    DegenerateWeights,

    #[error("{failed} of {total} Metropolis-Hastings proposals failed to evaluate")]
    ProposalFailures { failed: usize, total: usize },

    #[error("bootstrap skipped {skipped} of {total} rank-deficient replicates")]
    BootstrapSkips { skipped: usize, total: usize },

    #[error("generation cap of {cap} reached at temperature {alpha}")]
    GenerationCap { cap: usize, alpha: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
