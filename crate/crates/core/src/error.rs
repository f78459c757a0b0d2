use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("radius {r} outside grid range [{lo}, {hi}]")]
    Range { r: f64, lo: f64, hi: f64 },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("mode {j} aliases on a grid with {n_theta} angles")]
    Aliasing { j: usize, n_theta: usize },
    #[error("radial grading is not geometric: {0}")]
    Grading(String),
    #[error("only {usable} usable samples above the noise floor (need {needed})")]
    InsufficientSamples { usable: usize, needed: usize },
    #[error("signal below noise floor: {0}")]
    SignalBelowFloor(String),
    #[error("energy {energy} is not above the rotation threshold {threshold}")]
    NonRotating { energy: f64, threshold: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        best: Box<crate::solver::SolveFailure>,
    },
    #[error("continuation aborted at stage {stage}: {source}")]
    Continuation {
        stage: usize,
        partial: Box<crate::solver::ContinuationResult>,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
