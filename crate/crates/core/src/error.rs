use thiserror::Error;

/// Failure modes of the solvers and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Newton iteration did not converge after {iters} iterations (best residual {best_residual:e})")]
    NonConvergence { iters: usize, best_residual: f64 },

    #[error("singular Jacobian: {0}")]
    SingularJacobian(String),

    #[error("continuation stalled at lambda = {lambda} with step {step:e} (last residual {residual:e})")]
    ContinuationStalled {
        lambda: f64,
        step: f64,
        residual: f64,
    },

    #[error("degenerate base: min m = {min_m:e} below floor {floor:e}")]
    DegenerateBase { min_m: f64, floor: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("corrector routes disagree: lambda direct = {direct}, extrapolated = {extrapolated}")]
    InconsistentRoutes { direct: f64, extrapolated: f64 },

    #[error("gradient is not periodic: mean {mean:e} exceeds tolerance {tol:e}")]
    NotPeriodic { mean: f64, tol: f64 },

    #[error("empty candidate catalog")]
    EmptyCatalog,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
