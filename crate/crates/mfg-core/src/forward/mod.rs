//! Forward problem: stationary states, time-dependent coupled solves, and
//! boundary measurement extraction.

pub mod cost;
pub mod elliptic;
pub mod measure;
pub mod mfg;
pub mod operator;
pub mod parabolic;

pub use cost::RunningCost;
pub use elliptic::{
    drift_field, solve_stationary, solve_stationary_density, solve_stationary_value, solve_steady,
    stationary_residual, StationaryState,
};
pub use measure::{
    check_compatibility, generate_measurements, measure, measure_fields, measure_stationary,
    solve_perturbed, CauchyDataset, CompatibilityReport, MeasurementLadder, PerturbationSpec,
};
pub use mfg::{evolution_residual, solve_mfg, FixedPointParams, MfgProblem, MfgSolution};
pub use operator::{operator_bandwidth, OperatorCoeffs};
pub use parabolic::{
    march_backward, march_forward, march_quadratic_backward, march_quadratic_backward_with,
    CoeffTimeline, NewtonParams, SourceSpec,
};
