use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field contains non-finite values")]
    NonFinite,

    #[error("derivative order {0} is not supported (maximum is 3)")]
    DerivativeOrder(u32),

    #[error("non-decaying integrand: mean {mean:.3e} exceeds threshold {threshold:.3e}")]
    NonDecaying { mean: f64, threshold: f64 },

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("CFL violation: dt = {dt:.3e} exceeds limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("possible breaking / instability at t = {t:.4}")]
    BlowUp { t: f64 },

    #[error("outside modulation tube: {0}")]
    ModulationTube(String),

    #[error("eigensolve did not converge: {0}")]
    EigenSolve(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("projection residual {residual:.3e} exceeds {limit:.3e}")]
    Projection { residual: f64, limit: f64 },

    #[error("ill-conditioned Gram matrix (condition {0:.3e})")]
    IllConditioned(f64),

    #[error("root count {found} exceeds the requested maximum {max}")]
    TooManyRoots { found: usize, max: usize },

    #[error("integration overflow: {0}")]
    Overflow(String),

    #[error("{0}")]
    Internal(String),
}
