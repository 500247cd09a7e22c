use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("density has zero integral and cannot be normalized")]
    ZeroDensity,
    #[error("CFL violation: dt={dt} max|v|={max_speed} dx={dx}")]
    CflViolation { dt: f64, max_speed: f64, dx: f64 },
    #[error("unstable step: {0}")]
    UnstableStep(String),
    #[error("sampling point ({x}, {y}) lies outside the grid")]
    OutOfDomain { x: f64, y: f64 },
    #[error("ill-posed configuration: {0}")]
    IllPosedConfig(String),
    #[error("non-finite value detected at t={t} (step {step})")]
    NonFinite { t: f64, step: usize },
    #[error("linear solver did not converge after {iterations} iterations (residual {residual})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
