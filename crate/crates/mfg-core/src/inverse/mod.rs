//! Recovery of the stationary state, the conformal factor, and the running
//! cost from boundary measurements.

pub(crate) mod basis;
pub mod coefficients;
pub mod data;
pub mod drift;
pub mod pipeline;
pub mod stationary;

pub use coefficients::{recover_cost_coefficient, CoefficientRecovery, CoefficientSettings};
pub use data::{extract_orders, DirectionRecords, NoiseScales};
pub use drift::{
    recover_drift, recover_drift_probe, DriftRecovery, DriftSettings, ProbeDriftSettings,
    ProbeOracle, SyntheticProbeOracle,
};
pub use pipeline::{
    build_truth, extract_measurements, run_pipeline, ErrorSummary, ExtractedRecords, GroundTruth,
    PipelineOutput, Reconstruction,
};
pub use stationary::{
    recover_conformal, recover_density, recover_value, ConformalRecovery, DEFAULT_MASK_FLOOR,
};
