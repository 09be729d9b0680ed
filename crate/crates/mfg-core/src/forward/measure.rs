//! Boundary measurements and the perturbation protocol.
//!
//! A measurement is the Cauchy data of both unknowns on the lateral
//! boundary: traces and outward normal derivatives of the value and the
//! density over all time levels.  Experiments perturb the stationary
//! boundary data along fixed directions `(g, h)` scaled by small sizes and
//! record one dataset per size vector; divided differences of those records
//! against the unperturbed baseline feed the reconstruction stage.

use std::sync::Arc;

use super::cost::RunningCost;
use super::elliptic::StationaryState;
use super::mfg::{solve_mfg, FixedPointParams, MfgProblem, MfgSolution};
use crate::config::PerturbationConfig;
use crate::error::SolverError;
use crate::fields::{ops, BoundaryData, BoundaryKind, Grid, MetricField, SpaceTimeField};

/// Cauchy data of one solved system.
#[derive(Debug, Clone)]
pub struct CauchyDataset {
    pub value_trace: BoundaryData,
    pub value_flux: BoundaryData,
    pub density_trace: BoundaryData,
    pub density_flux: BoundaryData,
}

impl CauchyDataset {
    pub fn grid(&self) -> &Arc<Grid> {
        self.value_trace.grid()
    }

    /// Entrywise `a - b` over all four records.
    pub fn difference(&self, other: &CauchyDataset) -> CauchyDataset {
        let mut out = self.clone();
        out.value_trace.axpy(-1.0, &other.value_trace);
        out.value_flux.axpy(-1.0, &other.value_flux);
        out.density_trace.axpy(-1.0, &other.density_trace);
        out.density_flux.axpy(-1.0, &other.density_flux);
        out
    }

    pub fn scale(&mut self, c: f64) {
        self.value_trace.scale(c);
        self.value_flux.scale(c);
        self.density_trace.scale(c);
        self.density_flux.scale(c);
    }

    pub fn axpy(&mut self, c: f64, other: &CauchyDataset) {
        self.value_trace.axpy(c, &other.value_trace);
        self.value_flux.axpy(c, &other.value_flux);
        self.density_trace.axpy(c, &other.density_trace);
        self.density_flux.axpy(c, &other.density_flux);
    }

    pub fn sup_norm(&self) -> f64 {
        self.value_trace
            .sup_norm()
            .max(self.value_flux.sup_norm())
            .max(self.density_trace.sup_norm())
            .max(self.density_flux.sup_norm())
    }
}

/// Extract Cauchy data from a value/density field pair.
pub fn measure_fields(value: &SpaceTimeField, density: &SpaceTimeField) -> CauchyDataset {
    CauchyDataset {
        value_trace: ops::trace(value),
        value_flux: ops::normal_derivative(value),
        density_trace: ops::trace(density),
        density_flux: ops::normal_derivative(density),
    }
}

/// Extract Cauchy data from a solved system.
pub fn measure(solution: &MfgSolution) -> CauchyDataset {
    measure_fields(&solution.value, &solution.density)
}

/// Cauchy data of a stationary pair extended constant in time.
pub fn measure_stationary(state: &StationaryState) -> CauchyDataset {
    let value = SpaceTimeField::extend(&state.value);
    let density = SpaceTimeField::extend(&state.density);
    CauchyDataset {
        value_trace: ops::trace(&value),
        value_flux: ops::normal_derivative(&value),
        density_trace: ops::trace(&density),
        density_flux: ops::normal_derivative(&density),
    }
}

/// One boundary perturbation direction: additive Dirichlet data for the
/// value (`g`) and the density (`h`).
#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub label: String,
    pub value_data: BoundaryData,
    pub density_data: BoundaryData,
}

impl PerturbationSpec {
    pub fn from_config(
        grid: &Arc<Grid>,
        config: &PerturbationConfig,
    ) -> Result<Self, crate::error::ConfigError> {
        let u_space = config.u_space.evaluate(grid)?;
        let m_space = config.m_space.evaluate(grid)?;
        let horizon = grid.t_horizon();
        let mut value_values = Vec::with_capacity(grid.sigma_len() * grid.levels());
        let mut density_values = Vec::with_capacity(grid.sigma_len() * grid.levels());
        for level in 0..grid.levels() {
            let t = grid.t(level);
            let eu = config.u_time.evaluate(t, horizon);
            let em = config.m_time.evaluate(t, horizon);
            for &node in grid.sigma_nodes() {
                value_values.push(u_space.at(node) * eu);
                density_values.push(m_space.at(node) * em);
            }
        }
        let wrap = |e: crate::error::FieldError| {
            crate::error::ConfigError::Validation(format!("perturbation data: {e}"))
        };
        Ok(PerturbationSpec {
            label: config.label.clone(),
            value_data: BoundaryData::new(grid.clone(), BoundaryKind::Trace, value_values)
                .map_err(wrap)?,
            density_data: BoundaryData::new(grid.clone(), BoundaryKind::Trace, density_values)
                .map_err(wrap)?,
        })
    }
}

/// Compatibility of a perturbation with the fixed endpoint data.
///
/// The terminal value and initial density are pinned, so boundary
/// perturbations must vanish there; for the perturbed solution to stay
/// smooth at those corners their time derivative should vanish too.  The
/// derivative check is discrete (one-sided difference across the first
/// step), so its threshold scales with the step and mesh truncation.
#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    /// `sup_Gamma |g(., T)|` — must be algebraically zero.
    pub terminal_value_defect: f64,
    /// `sup_Gamma |h(., 0)|` — must be algebraically zero.
    pub initial_density_defect: f64,
    /// One-sided `|d/dt g|` at the terminal corner.
    pub terminal_corner_rate: f64,
    /// One-sided `|d/dt h|` at the initial corner.
    pub initial_corner_rate: f64,
    pub algebraic_tolerance: f64,
    pub corner_tolerance: f64,
    pub pass: bool,
}

pub fn check_compatibility(spec: &PerturbationSpec) -> CompatibilityReport {
    let grid = spec.value_data.grid();
    let last = grid.n_time();
    let dt = grid.dt();
    let sup = |slice: &[f64]| slice.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let terminal_value_defect = sup(spec.value_data.level(last));
    let initial_density_defect = sup(spec.density_data.level(0));
    let rate = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            / dt
    };
    let terminal_corner_rate = rate(
        spec.value_data.level(last),
        spec.value_data.level(last - 1),
    );
    let initial_corner_rate = rate(spec.density_data.level(1), spec.density_data.level(0));
    let scale = 1.0 + spec.value_data.sup_norm().max(spec.density_data.sup_norm());
    let h = grid.h_min();
    let algebraic_tolerance = 1e-8 * scale;
    let corner_tolerance = 10.0 * (dt + h * h) * scale;
    let pass = terminal_value_defect <= algebraic_tolerance
        && initial_density_defect <= algebraic_tolerance
        && terminal_corner_rate <= corner_tolerance
        && initial_corner_rate <= corner_tolerance;
    CompatibilityReport {
        terminal_value_defect,
        initial_density_defect,
        terminal_corner_rate,
        initial_corner_rate,
        algebraic_tolerance,
        corner_tolerance,
        pass,
    }
}

/// Solve the coupled system with boundary data perturbed along the given
/// directions: `u|_Sigma = u0 + sum_i eps_i g_i`, `m|_Sigma = m0 + sum_i
/// eps_i h_i`; terminal value and initial density stay at the stationary
/// pair.
pub fn solve_perturbed(
    state: &StationaryState,
    metric: &MetricField,
    cost: &RunningCost,
    directions: &[PerturbationSpec],
    sizes: &[f64],
    params: &FixedPointParams,
) -> Result<MfgSolution, SolverError> {
    if directions.len() != sizes.len() {
        return Err(SolverError::InvalidInput(format!(
            "{} perturbation directions but {} sizes",
            directions.len(),
            sizes.len()
        )));
    }
    let grid = state.value.grid().clone();
    let stationary = measure_stationary(&StationaryState {
        value: state.value.clone(),
        density: state.density.clone(),
        drift: state.drift.clone(),
    });
    let mut value_boundary = stationary.value_trace;
    let mut density_boundary = stationary.density_trace;
    for (spec, &eps) in directions.iter().zip(sizes) {
        value_boundary.axpy(eps, &spec.value_data);
        density_boundary.axpy(eps, &spec.density_data);
    }
    let problem = MfgProblem {
        metric: metric.clone(),
        cost: cost.clone(),
        terminal_value: state.value.clone(),
        initial_density: state.density.clone(),
        value_boundary,
        density_boundary,
    };
    let _ = grid;
    solve_mfg(&problem, params)
}

/// Measurements for a ladder of size vectors, with the exact stationary
/// baseline attached.
#[derive(Debug, Clone)]
pub struct MeasurementLadder {
    pub baseline: CauchyDataset,
    /// `(size vector, dataset)` in the order requested.
    pub records: Vec<(Vec<f64>, CauchyDataset)>,
}

pub fn generate_measurements(
    state: &StationaryState,
    metric: &MetricField,
    cost: &RunningCost,
    directions: &[PerturbationSpec],
    size_vectors: &[Vec<f64>],
    params: &FixedPointParams,
) -> Result<MeasurementLadder, SolverError> {
    let baseline = measure_stationary(state);
    let mut records = Vec::with_capacity(size_vectors.len());
    for sizes in size_vectors {
        let solution = solve_perturbed(state, metric, cost, directions, sizes, params)?;
        records.push((sizes.clone(), measure(&solution)));
    }
    Ok(MeasurementLadder { baseline, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Envelope, Profile};
    use crate::fields::ScalarField;
    use crate::forward::elliptic::solve_stationary;
    use crate::forward::parabolic::NewtonParams;
    use crate::reference::ConformalFamily1d;

    fn setup() -> (Arc<Grid>, MetricField, StationaryState) {
        let fam = ConformalFamily1d::standard();
        let grid = Grid::new_1d(0.0, 1.0, 17, 0.5, 16).unwrap();
        let metric = MetricField::isotropic(
            grid.clone(),
            (0..grid.n_nodes())
                .map(|i| fam.kappa(grid.coords(i)[0]))
                .collect(),
        )
        .unwrap();
        let u_trace: Vec<f64> = grid
            .sigma_nodes()
            .iter()
            .map(|&n| fam.value(grid.coords(n)[0]))
            .collect();
        let m_trace: Vec<f64> = grid
            .sigma_nodes()
            .iter()
            .map(|&n| fam.density(grid.coords(n)[0]))
            .collect();
        let state = solve_stationary(
            &grid,
            &metric,
            &u_trace,
            &m_trace,
            &NewtonParams {
                tolerance: 1e-13,
                ..Default::default()
            },
        )
        .unwrap();
        (grid, metric, state)
    }

    fn ramp_spec(grid: &Arc<Grid>) -> PerturbationSpec {
        PerturbationSpec::from_config(
            grid,
            &PerturbationConfig {
                label: "ramp".into(),
                u_space: Profile::Constant { value: 1.0 },
                u_time: Envelope::RampDown { power: 2 },
                m_space: Profile::Constant { value: 1.0 },
                m_time: Envelope::RampUp { power: 2 },
            },
        )
        .unwrap()
    }

    #[test]
    fn compatible_ramps_pass_and_offsets_fail() {
        let (grid, _, _) = setup();
        let good = ramp_spec(&grid);
        assert!(check_compatibility(&good).pass);
        let bad = PerturbationSpec::from_config(
            &grid,
            &PerturbationConfig {
                label: "offset".into(),
                u_space: Profile::Constant { value: 1.0 },
                u_time: Envelope::Constant { value: 1.0 },
                m_space: Profile::Constant { value: 1.0 },
                m_time: Envelope::Constant { value: 1.0 },
            },
        )
        .unwrap();
        let report = check_compatibility(&bad);
        assert!(!report.pass);
        assert!(report.terminal_value_defect > 0.5);
    }

    #[test]
    fn baseline_matches_perturbation_at_size_zero() {
        let (grid, metric, state) = setup();
        let cost = RunningCost::new(
            state.density.clone(),
            vec![(2, ScalarField::constant(grid.clone(), 1.0))],
        )
        .unwrap();
        let spec = ramp_spec(&grid);
        let ladder = generate_measurements(
            &state,
            &metric,
            &cost,
            &[spec],
            &[vec![0.0]],
            &FixedPointParams::default(),
        )
        .unwrap();
        let diff = ladder.records[0].1.difference(&ladder.baseline);
        assert!(
            diff.sup_norm() < 1e-8,
            "zero-size record differs from baseline by {}",
            diff.sup_norm()
        );
    }

    #[test]
    fn perturbation_response_scales_linearly_at_leading_order() {
        let (grid, metric, state) = setup();
        let cost = RunningCost::new(
            state.density.clone(),
            vec![(2, ScalarField::constant(grid.clone(), 1.0))],
        )
        .unwrap();
        let spec = ramp_spec(&grid);
        let ladder = generate_measurements(
            &state,
            &metric,
            &cost,
            &[spec],
            &[vec![1e-3], vec![5e-4]],
            &FixedPointParams::default(),
        )
        .unwrap();
        let mut d1 = ladder.records[0].1.difference(&ladder.baseline);
        let mut d2 = ladder.records[1].1.difference(&ladder.baseline);
        d1.scale(1.0 / 1e-3);
        d2.scale(1.0 / 5e-4);
        // First divided differences at two sizes agree to O(eps).
        let gap = d1.difference(&d2).sup_norm();
        let scale = d1.sup_norm();
        assert!(
            gap <= 0.02 * scale.max(1e-12),
            "linearity gap {gap} vs scale {scale}"
        );
    }
}
