//! Error taxonomy shared across the crate.
//!
//! Each solver family reports failure through its own enum so that callers can
//! match on the situations they can actually handle (retry with damping,
//! enlarge a tolerance, reject a config) instead of parsing strings.

use thiserror::Error;

/// Construction or use of grids and lattice fields.
#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands: {0}")]
    GridMismatch(String),
    #[error("field length {got} does not match grid ({expected} values expected)")]
    LengthMismatch { got: usize, expected: usize },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("metric is not positive definite at node {node}")]
    NotPositiveDefinite { node: usize },
    #[error("conformal factor must be strictly positive; found {value} at node {node}")]
    NonPositiveFactor { node: usize, value: f64 },
}

/// Direct linear algebra (banded LU, dense least squares).
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("singular system: zero pivot in column {column}")]
    SingularSystem { column: usize },
    #[error("ill-conditioned system: reciprocal condition estimate {rcond:.3e} below floor {floor:.3e}")]
    IllConditioned { rcond: f64, floor: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Nonlinear and time-dependent PDE solvers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },
    #[error("Jacobian factorization failed at iteration {iteration}: {source}")]
    IndefiniteJacobian {
        iteration: usize,
        #[source]
        source: LinalgError,
    },
    #[error("fixed-point iteration diverged at sweep {sweep} (successive difference {diff:.3e})")]
    FixedPointDivergence { sweep: usize, diff: f64 },
    #[error("linear step failed: {0}")]
    LinearStep(#[from] LinalgError),
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

/// Exponential probe construction.
#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("ray direction has zero length")]
    ZeroDirection,
    #[error("exponent budget exceeded: rho^2 T + rho diam = {required:.1} > {budget:.1}")]
    OverflowRisk { required: f64, budget: f64 },
    #[error("invalid probe parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Coefficient recovery.
#[derive(Debug, Error)]
pub enum InverseError {
    #[error("missing lower-order input: {0}")]
    MissingLowerOrder(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("normal equations ill-conditioned: reciprocal condition estimate {rcond:.3e}")]
    IllConditioned { rcond: f64 },
    #[error("insufficient excitation: source factor norm {norm:.3e} below floor {floor:.3e}")]
    InsufficientExcitation { norm: f64, floor: f64 },
    #[error("gradient field degenerate on the whole domain; conformal factor unrecoverable")]
    DegenerateEverywhere,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Configuration parsing and validation.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config validation error: {0}")]
    Validation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
