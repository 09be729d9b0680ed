//! End-to-end synthetic laboratory.
//!
//! One call builds a ground truth from a config, measures it exclusively
//! through boundary data of perturbed solves, runs the full recovery chain
//! on those records, and reports reconstruction errors against the truth it
//! never showed the reconstruction:
//!
//! ```text
//! config -> stationary truth -> perturbed boundary records
//!        -> order extraction (+ optional noise)
//!        -> drift -> value -> conformal factor -> density -> cost orders
//! ```
//!
//! Every stage consumes only the outputs of earlier stages, so the chain is
//! an executable statement of what boundary data determines: the drift from
//! first-order flux records alone, the stationary pair from the drift and
//! the stationary traces, the conformal factor pointwise from the drift
//! relation, and one cost coefficient per Taylor order of the records.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::sync::Arc;

use super::coefficients::{
    recover_cost_coefficient, CoefficientRecovery, CoefficientSettings,
};
use super::data::{extract_orders, DirectionRecords};
use super::drift::{
    recover_drift, recover_drift_probe, DriftSettings, ProbeDriftSettings, SyntheticProbeOracle,
};
use super::stationary::{
    recover_conformal, recover_density, recover_value, ConformalRecovery, DEFAULT_MASK_FLOOR,
};
use crate::config::{ExperimentConfig, RecoveryMode};
use crate::error::InverseError;
use crate::fields::{Grid, MetricField, ScalarField, VectorField};
use crate::forward::{
    generate_measurements, solve_stationary, FixedPointParams, NewtonParams, PerturbationSpec,
    RunningCost, StationaryState,
};

/// Everything the config describes, solved exactly.
pub struct GroundTruth {
    pub grid: Arc<Grid>,
    pub metric: MetricField,
    pub cost: RunningCost,
    pub state: StationaryState,
}

/// Build the ground-truth stationary world of a config.
pub fn build_truth(config: &ExperimentConfig) -> Result<GroundTruth, InverseError> {
    let grid = config.grid.build()?;
    let metric = config.metric.build(&grid)?;
    let u_field = config.stationary.u_trace.evaluate(&grid)?;
    let m_field = config.stationary.m_trace.evaluate(&grid)?;
    let u_trace: Vec<f64> = grid.sigma_nodes().iter().map(|&n| u_field.at(n)).collect();
    let m_trace: Vec<f64> = grid.sigma_nodes().iter().map(|&n| m_field.at(n)).collect();
    let state = solve_stationary(&grid, &metric, &u_trace, &m_trace, &NewtonParams::default())?;
    let mut coeffs = Vec::new();
    for c in &config.cost.coefficients {
        coeffs.push((c.order, c.profile.evaluate(&grid)?));
    }
    let cost = RunningCost::new(state.density.clone(), coeffs)
        .map_err(InverseError::Solver)?;
    Ok(GroundTruth {
        grid,
        metric,
        cost,
        state,
    })
}

/// Per-direction Taylor records extracted from the measurement ladder.
pub struct ExtractedRecords {
    pub directions: Vec<PerturbationSpec>,
    pub records: Vec<DirectionRecords>,
    /// Stationary boundary traces (value, density) at one time level.
    pub value_trace: Vec<f64>,
    pub density_trace: Vec<f64>,
    /// Size used for the divided differences.
    pub epsilon: f64,
}

/// Drive the truth with the configured boundary directions at sizes
/// `{-2e, -e, +e, +2e}`, measure, extract the Taylor orders, and apply the
/// configured measurement noise.
pub fn extract_measurements(
    config: &ExperimentConfig,
    truth: &GroundTruth,
) -> Result<ExtractedRecords, InverseError> {
    let settings = config.reconstruction.as_ref().ok_or_else(|| {
        InverseError::InsufficientData("config has no reconstruction block".into())
    })?;
    if config.perturbations.is_empty() {
        return Err(InverseError::InsufficientData(
            "reconstruction needs at least one boundary direction".into(),
        ));
    }
    let grid = &truth.grid;
    let mut directions = Vec::with_capacity(config.perturbations.len());
    for p in &config.perturbations {
        directions.push(PerturbationSpec::from_config(grid, p)?);
    }
    let epsilon = *settings
        .epsilons
        .last()
        .expect("validated configs have at least one size");
    let want_third = settings.max_cost_order >= 3;

    // Four perturbed solves per direction, one shared baseline.
    let mut size_vectors = Vec::with_capacity(4 * directions.len());
    for d in 0..directions.len() {
        for mult in [-2.0, -1.0, 1.0, 2.0] {
            let mut sizes = vec![0.0; directions.len()];
            sizes[d] = mult * epsilon;
            size_vectors.push(sizes);
        }
    }
    // The order-k divided difference amplifies solver error by ~1/epsilon^k,
    // so the sweeps must converge well below the smallest record the ladder
    // is expected to resolve.
    let solve_params = FixedPointParams {
        tolerance: if want_third { 1e-12 } else { 1e-10 },
        ..FixedPointParams::default()
    };
    let ladder = generate_measurements(
        &truth.state,
        &truth.metric,
        &truth.cost,
        &directions,
        &size_vectors,
        &solve_params,
    )?;

    let mut rng = ChaCha12Rng::seed_from_u64(config.run.seed);
    let mut records = Vec::with_capacity(directions.len());
    for d in 0..directions.len() {
        let base = 4 * d;
        let mut rec = extract_orders(
            &ladder.baseline,
            &ladder.records[base].1,
            &ladder.records[base + 1].1,
            &ladder.records[base + 2].1,
            &ladder.records[base + 3].1,
            epsilon,
            want_third,
        );
        rec.add_noise(settings.noise_level, &mut rng);
        records.push(rec);
    }

    let value_trace = ladder.baseline.value_trace.level(0).to_vec();
    let density_trace = ladder.baseline.density_trace.level(0).to_vec();
    Ok(ExtractedRecords {
        directions,
        records,
        value_trace,
        density_trace,
        epsilon,
    })
}

/// The full recovered world.
pub struct Reconstruction {
    pub drift: VectorField,
    pub value: ScalarField,
    pub conformal: ConformalRecovery,
    pub density: ScalarField,
    /// Recovered metric: the known base carrying the recovered factor.
    pub metric: MetricField,
    pub coefficients: Vec<(usize, CoefficientRecovery)>,
    pub drift_iterations: usize,
}

/// Relative interior L2 errors of a reconstruction against the truth.
#[derive(Debug, Clone)]
pub struct ErrorSummary {
    pub drift: f64,
    pub value: f64,
    /// Conformal factor over informative nodes only.
    pub conformal: f64,
    pub conformal_coverage: f64,
    pub density: f64,
    pub coefficients: Vec<(usize, f64)>,
}

pub struct PipelineOutput {
    pub truth: GroundTruth,
    pub reconstruction: Reconstruction,
    pub errors: ErrorSummary,
    pub config_hash: String,
}

fn rel_l2_interior(grid: &Grid, rec: &[f64], truth: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for node in grid.interior_nodes() {
        let d = rec[node] - truth[node];
        num += d * d;
        den += truth[node] * truth[node];
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn drift_error(grid: &Grid, rec: &VectorField, truth: &VectorField) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for node in grid.interior_nodes() {
        for c in 0..grid.dim() {
            let d = rec.comp(c)[node] - truth.comp(c)[node];
            num += d * d;
            den += truth.comp(c)[node].powi(2);
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn conformal_error(grid: &Grid, recovery: &ConformalRecovery, truth: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for node in grid.interior_nodes() {
        if !recovery.mask[node] {
            continue;
        }
        let d = recovery.kappa.at(node) - truth[node];
        num += d * d;
        den += truth[node] * truth[node];
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// Run the whole laboratory on one config.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutput, InverseError> {
    let settings = config
        .reconstruction
        .clone()
        .ok_or_else(|| InverseError::InsufficientData("config has no reconstruction block".into()))?;
    let truth = build_truth(config)?;
    let grid = truth.grid.clone();
    let extracted = extract_measurements(config, &truth)?;

    // Stage one: drift from first-order value-flux records.
    let drift_settings = DriftSettings {
        lambda: settings.tikhonov_lambda.min(1e-6),
        ..DriftSettings::default()
    };
    let (drift, drift_iterations) = match settings.mode {
        RecoveryMode::Variational => {
            let flux_records: Vec<_> = extracted
                .records
                .iter()
                .map(|r| r.first.value_flux.clone())
                .collect();
            let recovery = recover_drift(
                &grid,
                &extracted.directions,
                &flux_records,
                None,
                &drift_settings,
            )?;
            (recovery.drift, recovery.iterations)
        }
        RecoveryMode::Probe => {
            let probe = config.probe.as_ref().ok_or_else(|| {
                InverseError::InsufficientData("probe mode needs a probe block".into())
            })?;
            let mut rhos = probe.rho_values.clone();
            rhos.sort_by(|a, b| a.partial_cmp(b).expect("finite frequencies"));
            if rhos.len() < 2 {
                return Err(InverseError::InsufficientData(
                    "probe mode needs two frequencies for the extrapolation".into(),
                ));
            }
            let max_mode = probe
                .xi_modes
                .iter()
                .map(|k| k.unsigned_abs() as usize)
                .max()
                .unwrap_or(2)
                .max(1);
            let horizon = grid.t_horizon();
            let oracle = SyntheticProbeOracle {
                drift: &truth.state.drift,
            };
            let reference = VectorField::zeros(grid.clone());
            let probe_settings = ProbeDriftSettings {
                max_mode,
                rho_pair: (rhos[rhos.len() - 2], rhos[rhos.len() - 1]),
                tau: probe.tau,
                window: (probe.chi_start * horizon, probe.chi_end * horizon),
            };
            let drift = recover_drift_probe(&grid, &reference, &oracle, &probe_settings)?;
            (drift, 1)
        }
    };

    // Stage two: stationary pair from the drift and the measured traces.
    let value = recover_value(&grid, &drift, &extracted.value_trace)?;
    let conformal = recover_conformal(&truth.metric, &drift, &value, DEFAULT_MASK_FLOOR)?;
    let density = recover_density(&grid, &drift, &extracted.density_trace)?;
    let metric = truth
        .metric
        .with_kappa(conformal.kappa.values().to_vec())
        .map_err(|e| InverseError::InsufficientData(format!("recovered factor: {e}")))?;
    let state = StationaryState {
        value: value.clone(),
        density: density.clone(),
        drift: drift.clone(),
    };

    // Stage three: cost coefficients, order by order.
    if settings.max_cost_order > 3 {
        return Err(InverseError::InsufficientData(
            "the five-point ladder provides Taylor orders up to three".into(),
        ));
    }
    // The coefficient solve sees model error from the recovered state in its
    // offset and columns, so its no-noise fallback keeps a floor even when the
    // drift stage runs nearly unregularized.
    let coeff_settings = CoefficientSettings {
        fallback_lambda: settings.tikhonov_lambda.max(1e-8),
        use_discrepancy: settings.discrepancy_principle,
        ..CoefficientSettings::default()
    };
    // Prefer a pure density excitation for the Taylor orders: without value
    // boundary data the first-order value response vanishes, so the quadratic
    // drift term contributes nothing to the higher-order records and errors in
    // the recovered drift cannot leak through that (otherwise dominant) term.
    let lead_index = extracted
        .directions
        .iter()
        .position(|d| d.value_data.values().iter().all(|&v| v == 0.0))
        .unwrap_or(0);
    let lead = &extracted.records[lead_index];
    let lead_direction = &extracted.directions[lead_index];
    let mut coefficients: Vec<(usize, CoefficientRecovery)> = Vec::new();
    for order in 2..=settings.max_cost_order {
        let lower = RunningCost::new(
            density.clone(),
            coefficients
                .iter()
                .map(|(k, r)| (*k, r.coefficient.clone()))
                .collect(),
        )
        .map_err(InverseError::Solver)?;
        let (records, noise) = match order {
            2 => (&lead.second, &lead.second_noise),
            3 => (
                lead.third.as_ref().ok_or_else(|| {
                    InverseError::MissingLowerOrder(
                        "third-order records were not extracted".into(),
                    )
                })?,
                &lead.third_noise,
            ),
            _ => unreachable!("bounded above by three"),
        };
        let recovery = recover_cost_coefficient(
            &state,
            &metric,
            &lower,
            order,
            lead_direction,
            records,
            noise,
            &coeff_settings,
        )?;
        coefficients.push((order, recovery));
    }

    // Error summary against the withheld truth.
    let kappa_truth = truth.metric.kappa();
    let mut coefficient_errors = Vec::new();
    for (order, recovery) in &coefficients {
        let truth_field = truth
            .cost
            .coefficient(*order)
            .cloned()
            .unwrap_or_else(|| ScalarField::constant(grid.clone(), 0.0));
        coefficient_errors.push((
            *order,
            rel_l2_interior(&grid, recovery.coefficient.values(), truth_field.values()),
        ));
    }
    let errors = ErrorSummary {
        drift: drift_error(&grid, &drift, &truth.state.drift),
        value: rel_l2_interior(&grid, value.values(), truth.state.value.values()),
        conformal: conformal_error(&grid, &conformal, kappa_truth),
        conformal_coverage: conformal.coverage,
        density: rel_l2_interior(&grid, density.values(), truth.state.density.values()),
        coefficients: coefficient_errors,
    };

    Ok(PipelineOutput {
        truth,
        reconstruction: Reconstruction {
            drift,
            value,
            conformal,
            density,
            metric,
            coefficients,
            drift_iterations,
        },
        errors,
        config_hash: config.hash(),
    })
}
