use thiserror::Error;

/// Errors raised by the orbit-lab operations.
///
/// Every variant carries a stable machine-readable code (see [`OrbitError::code`])
/// so front ends can surface failures without parsing messages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitError {
    #[error("vector norm {norm:e} is below the underflow tolerance")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power method did not converge after {iterations} iterations (best value {best})")]
    NonConvergence { iterations: usize, best: f64 },

    #[error("requested power {requested} exceeds the truncation-safe horizon {horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },

    #[error("power {n} of the operator is numerically zero")]
    DegeneratePower { n: usize },

    #[error("subspace is trivial: constraints have full rank {rank} in dimension {dim}")]
    EmptySubspace { rank: usize, dim: usize },

    #[error("no index n >= {start} with a_n <= {bound} within the family horizon")]
    NoEligibleIndex { start: usize, bound: f64 },

    #[error("norming search for member {n} reached only {achieved} < {required}")]
    NormingFailure { n: usize, achieved: f64, required: f64 },

    #[error("no index n >= {start} with ||T_n u|| >= sqrt(a_n) ||T_n||")]
    NoGoodDirection { start: usize },

    #[error("power norms decrease at n = {n}: {prev} > {next}")]
    NormsNotMonotone { n: usize, prev: f64, next: f64 },

    #[error("no pair of images lies within the cluster tolerance {tol}")]
    EmptyCluster { tol: f64 },

    #[error("restricted norm never drops below a * ||T^n|| up to horizon {horizon}")]
    EmptyA { horizon: usize },

    #[error("grid search found no scale for block {block}")]
    SearchFailure { block: usize },

    #[error("block plan infeasible: {0}")]
    PlanInfeasible(String),

    #[error("no norming direction in the constrained subspace at step {step} (searched n up to {n_max})")]
    StarFails { step: usize, n_max: usize },

    #[error("plan exhausted after {0} steps")]
    PlanExhausted(usize),

    #[error("verification failed at n_j = {n}: ratio {ratio} < required {required}")]
    VerificationFailure { n: usize, ratio: f64, required: f64 },

    #[error("constant C_p is unknown for L^p with p = {p}")]
    UnknownConstant { p: f64 },

    #[error("curve has no matched (t, 2t) pairs with positive value")]
    NoMatchedPairs,

    #[error("claim failed: {0}")]
    ClaimFailed(String),

    #[error("operator description error: {0}")]
    Description(String),
}

impl OrbitError {
    pub fn code(&self) -> &'static str {
        match self {
            OrbitError::ZeroVector { .. } => "zero_vector",
            OrbitError::DimensionMismatch { .. } => "dimension_mismatch",
            OrbitError::InvalidArgument(_) => "invalid_argument",
            OrbitError::NonConvergence { .. } => "non_convergence",
            OrbitError::HorizonExceeded { .. } => "horizon_exceeded",
            OrbitError::DegeneratePower { .. } => "degenerate_power",
            OrbitError::EmptySubspace { .. } => "empty_subspace",
            OrbitError::NoEligibleIndex { .. } => "no_eligible_index",
            OrbitError::NormingFailure { .. } => "norming_failure",
            OrbitError::NoGoodDirection { .. } => "no_good_direction",
            OrbitError::NormsNotMonotone { .. } => "norms_not_monotone",
            OrbitError::EmptyCluster { .. } => "empty_cluster",
            OrbitError::EmptyA { .. } => "empty_a",
            OrbitError::SearchFailure { .. } => "search_failure",
            OrbitError::PlanInfeasible(_) => "plan_infeasible",
            OrbitError::StarFails { .. } => "star_fails",
            OrbitError::PlanExhausted(_) => "plan_exhausted",
            OrbitError::VerificationFailure { .. } => "verification_failure",
            OrbitError::UnknownConstant { .. } => "unknown_constant",
            OrbitError::NoMatchedPairs => "no_matched_pairs",
            OrbitError::ClaimFailed(_) => "claim_failed",
            OrbitError::Description(_) => "description",
        }
    }
}

pub type Result<T> = std::result::Result<T, OrbitError>;
