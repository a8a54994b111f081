use thiserror::Error;

/// Errors raised by the estimator, the beamformers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("sample covariance is singular (lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e}, K = {snapshots}); enable diagonal loading to invert it")]
    SingularCovariance {
        lambda_min: f64,
        lambda_max: f64,
        snapshots: usize,
    },

    #[error("sector constraint is infeasible: delta0/M = {ratio:e} < lambda_min(C~) = {lambda_min:e}")]
    Infeasible { ratio: f64, lambda_min: f64 },

    #[error("sector constraint is only boundary-feasible (delta0/M = lambda_min(C~) = {lambda_min:e}); the feasible set is the finite set of minimal eigenvectors of C~, enumerate it instead of solving the dual")]
    BoundaryFeasible { lambda_min: f64 },

    #[error("worst-case beamformer infeasible: epsilon = {epsilon} >= ||p|| = {norm}")]
    WorstCaseInfeasible { epsilon: f64, norm: f64 },

    #[error("primal recovery inconsistency: {0}")]
    Recovery(String),

    #[error("rank-one extraction failed: {0}")]
    Extraction(String),

    #[error("oracle failed: {0}")]
    Oracle(String),

    #[error("harness invariant violated: {0}")]
    Harness(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
