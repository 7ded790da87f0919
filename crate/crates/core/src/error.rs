use thiserror::Error;

/// Errors produced by the numerical pipeline.
///
/// Variants are grouped so a caller can map them onto coarse exit classes:
/// model/assumption problems, numerical failures, and input problems.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the operation's domain (e.g. kernel at t <= 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature failed to reach its tolerance within the
    /// refinement budget; signals a pathological integrand.
    #[error("quadrature did not converge on [{a}, {b}] (reached level {level})")]
    Quadrature { a: f64, b: f64, level: usize },

    /// A model hypothesis that an operation relies on fails on the grid.
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    /// The diffusion-scale function changes sign, so the trait change of
    /// variables is not a diffeomorphism.
    #[error("sigma changes sign on the domain; the reduction map is not monotone")]
    NonMonotoneSigma,

    /// Two consecutive eigenvalues are too close; usually means the
    /// truncation box is splitting a mode.
    #[error("near-degenerate eigenvalues: gap {gap:.3e} below index {index}")]
    NearDegenerate { index: usize, gap: f64 },

    #[error("eigensolver failed: {0}")]
    EigenSolver(String),

    /// The truncated kernel went negative beyond tolerance-level dust.
    #[error("kernel consistency: truncated value {value:.3e} below -tail tolerance at t={t}")]
    NegativeKernel { value: f64, t: f64 },

    /// Conditional evolution lost essentially all mass.
    #[error("conditional evolution degenerated: total mass {mass:.3e}")]
    DegenerateEvolution { mass: f64 },

    /// A Monte Carlo batch produced no usable samples.
    #[error("no surviving samples in the Monte Carlo batch")]
    EmptySample,

    /// Effective sample size too small for the requested comparison.
    #[error("effective sample size {ess:.1} below required {required:.1}")]
    InsufficientSample { ess: f64, required: f64 },

    /// Point outside the support where a ratio of eigenfunctions is defined.
    #[error("point {x} outside the numerical support of the ground state")]
    OutOfSupport { x: f64 },

    /// A non-finite value surfaced in a computation.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse classification used by the command line tool for exit codes.
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            AssumptionViolation(_) => ErrorClass::Assumption,
            Domain(_) | Config(_) | Json(_) => ErrorClass::Input,
            Io(_) => ErrorClass::Io,
            _ => ErrorClass::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Assumption,
    Numerical,
    Input,
    Io,
}
