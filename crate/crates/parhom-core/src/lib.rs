//! Numerical laboratory for fully nonlinear uniformly parabolic equations in
//! stationary ergodic space-time random media.
//!
//! The crate provides monotone explicit finite-difference solvers on parabolic
//! cylinders and cubes, projected obstacle-problem solvers with contact-set
//! bookkeeping, two independent estimators for the effective operator, Monte
//! Carlo moment estimation for the obstacle masses, subadditive ergodic
//! averaging over nested cube families, and sup/inf convolution regularization
//! operators. Everything is seed-deterministic: the same seed produces the
//! same numbers regardless of thread count.

pub mod environment;
pub mod ergodic;
pub mod grid;
pub mod homogenize;
pub mod moments;
pub mod obstacle;
pub mod operators;
pub mod regularity;
pub mod rng;
pub mod solver;
pub mod stats;

pub use environment::{sample_env, EnvKind, EnvSample, EnvSpec};
pub use grid::{
    make_domain, parabolic_distance, DomainKind, GridSpec, ParabolicDomain, Region,
    SpaceTimeField, SpaceTimePoint,
};
pub use obstacle::{solve_obstacle, ObstacleSolution, Side};
pub use operators::{pucci_minus, pucci_plus, BaseKind, OperatorSpec, SymMatrix};
pub use solver::{solve_corrector, solve_effective, solve_parabolic, BoundaryData, Rhs, SolveConfig};

/// Crate-wide error type. Configuration errors carry the offending parameter
/// name so callers can surface it verbatim.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("CFL violated: dt = {dt:.6e} exceeds monotonicity bound {max:.6e}")]
    CflViolation { dt: f64, max: f64 },
    #[error("grid does not resolve the oscillation scale: {name} = {value:.6e} exceeds {max:.6e}")]
    ResolutionViolation { name: &'static str, value: f64, max: f64 },
    #[error("NaN detected mid-march at step {step}")]
    NanDetected { step: usize },
    #[error("boundary positivity violated: min over parabolic boundary = {0:.6e}")]
    BoundaryPositivity(f64),
    #[error("modulated operator evaluated without an environment sample")]
    MissingEnvironment,
    #[error("extrapolation refused: argument {m:.6e} outside sampled range [{lo:.6e}, {hi:.6e}]")]
    Extrapolation { m: f64, lo: f64, hi: f64 },
    #[error("solve budget exhausted after {solves} solves (bracket width {width:.6e})")]
    BudgetExhausted { solves: usize, width: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
