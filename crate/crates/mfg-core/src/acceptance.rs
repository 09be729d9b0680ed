//! Runnable acceptance battery: every shipped guarantee as a named check.
//!
//! Each check builds its own small experiment, exercises one guarantee end to
//! end, and returns a [`CriterionReport`] with a one-line summary of what was
//! measured. The `verify` CLI subcommand and the `acceptance` integration test
//! both consume [`run_all`], so the gates live here, in one place, and cannot
//! drift apart between the two consumers.
//!
//! The checks are sized for a desk machine: 1D grids up to 129 nodes, 2D up
//! to 33x33, and the slowest check (the noiseless end-to-end reconstruction)
//! finishes in well under its budget.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::Instant;

use num_complex::Complex64;

use crate::config::{
    BaseMetric, CostCoefficient, CostConfig, Envelope, ExperimentConfig, GridConfig, MetricConfig,
    PerturbationConfig, Profile, ReconstructionSettings, RecoveryMode, RunConfig, StationaryConfig,
};
use crate::fields::{
    ops, BoundaryData, BoundaryKind, Grid, MetricField, ScalarField, SpaceTimeField, VectorField,
};
use crate::forward::{
    drift_field, march_backward, march_forward, solve_mfg, solve_stationary, CoeffTimeline,
    FixedPointParams, MfgProblem, NewtonParams, OperatorCoeffs, PerturbationSpec, RunningCost,
    SourceSpec,
};
use crate::inverse::{build_truth, extract_measurements, run_pipeline};
use crate::linearize::frechet_report;
use crate::probes::{
    build_amplitudes, leading_term_pairing, solve_probe_pair, volume_pairing, window_transform,
    CgoParams,
};
use crate::reference::dft;

/// Sup-norm budget for the zero-perturbation evolution staying on the
/// stationary state over the whole horizon.
pub const PERSISTENCE_SUP_TOL: f64 = 1e-8;
/// Admissible log-log slope of the first-order Taylor remainder.
pub const FIRST_ORDER_SLOPE_BAND: (f64, f64) = (1.8, 2.2);
/// Admissible log-log slope of the second-order Taylor remainder.
pub const SECOND_ORDER_SLOPE_BAND: (f64, f64) = (2.7, 3.3);
/// Nodewise relative budget for the stored drift against its defining formula.
pub const DRIFT_IDENTITY_REL_TOL: f64 = 1e-12;
/// Probe remainder norm at the top of the ladder relative to the bottom.
pub const REMAINDER_DECAY_FACTOR: f64 = 0.7;
/// Relative budget for the normalized leading pairing against the discrete
/// Fourier coefficient it estimates.
pub const PAIRING_REL_TOL: f64 = 0.02;
/// Relative interior-L2 budget for drift, value, conformal factor, density.
pub const STATE_REL_TOL: f64 = 0.05;
/// Relative budget for the recovered quadratic cost coefficient (clean data).
pub const QUADRATIC_REL_TOL: f64 = 0.10;
/// Relative budget for the recovered cubic cost coefficient (clean data).
pub const CUBIC_REL_TOL: f64 = 0.15;
/// Sup-norm budget between measurement sets of identically configured worlds.
pub const REPLAY_SUP_TOL: f64 = 1e-9;
/// Required ratio between the measurement separation of distinct quadratic
/// coefficients and the extraction's own discretization floor.
pub const SEPARATION_MARGIN: f64 = 10.0;
/// Scaled rounding budget for exactness identities, in machine epsilons.
pub const EXACTNESS_EPS_MULTIPLE: f64 = 10.0;
/// Admissible observed order of the spatial discretization.
pub const SPATIAL_ORDER_BAND: (f64, f64) = (1.8, 2.2);
/// Admissible observed order of the time discretization.
pub const TEMPORAL_ORDER_BAND: (f64, f64) = (0.8, 1.2);
/// Relative budget for the quadratic coefficient under 1% data noise with the
/// penalty weight chosen by the discrepancy principle.
pub const NOISY_QUADRATIC_REL_TOL: f64 = 0.25;

/// Outcome of one acceptance check.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub name: &'static str,
    pub passed: bool,
    /// What was measured and against which gate, for the run log.
    pub detail: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} {}: {}", self.name, self.detail)
    }
}

/// Run a check body, folding any solver/config error into a failed report.
fn guarded(
    name: &'static str,
    body: impl FnOnce() -> Result<(bool, String), String>,
) -> CriterionReport {
    match body() {
        Ok((passed, detail)) => CriterionReport {
            name,
            passed,
            detail,
        },
        Err(message) => CriterionReport {
            name,
            passed: false,
            detail: format!("did not run to completion: {message}"),
        },
    }
}

fn within(band: (f64, f64), x: f64) -> bool {
    x >= band.0 && x <= band.1
}

fn st_sup_diff(a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |worst, (x, y)| worst.max((x - y).abs()))
}

fn st_l2_diff(a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    let mut diff = a.clone();
    diff.axpy(-1.0, b);
    ops::st_l2_norm(&diff)
}

/// Constant-in-time Dirichlet records of a stationary field.
fn stationary_boundary(grid: &std::sync::Arc<Grid>, field: &ScalarField) -> BoundaryData {
    let trace = ops::trace_scalar(field);
    let mut values = Vec::with_capacity(trace.len() * grid.levels());
    for _ in 0..grid.levels() {
        values.extend_from_slice(&trace);
    }
    BoundaryData::new(grid.clone(), BoundaryKind::Trace, values).expect("trace shaped for grid")
}

fn profile_trace(grid: &std::sync::Arc<Grid>, profile: &Profile) -> Result<Vec<f64>, String> {
    let field = profile.evaluate(grid).map_err(|e| e.to_string())?;
    Ok(grid.sigma_nodes().iter().map(|&n| field.at(n)).collect())
}

/// Zero-perturbation evolution must sit on the stationary state: terminal
/// value, initial density, and boundary records all come from the stationary
/// pair, and the coupled sweep has nothing to move.
pub fn stationary_persistence() -> CriterionReport {
    guarded("stationary persistence", || {
        let start = Instant::now();
        let grid = Grid::new_1d(0.0, 1.0, 65, 0.5, 64).map_err(|e| e.to_string())?;
        let metric = MetricConfig {
            base: BaseMetric::Identity,
            kappa: Profile::SineProduct {
                mean: 1.0,
                amplitude: 0.25,
                frequency: [1, 0],
                phase: [0.0, 0.0],
            },
        }
        .build(&grid)
        .map_err(|e| e.to_string())?;
        let u_trace = profile_trace(
            &grid,
            &Profile::Nodes {
                values: (0..65).map(|i| 0.3 * i as f64 / 64.0).collect(),
            },
        )?;
        let m_trace = profile_trace(
            &grid,
            &Profile::Nodes {
                values: (0..65).map(|i| 1.0 + 0.2 * i as f64 / 64.0).collect(),
            },
        )?;
        let state = solve_stationary(&grid, &metric, &u_trace, &m_trace, &NewtonParams::default())
            .map_err(|e| e.to_string())?;
        let quadratic = Profile::SineProduct {
            mean: 1.2,
            amplitude: 0.4,
            frequency: [1, 0],
            phase: [FRAC_PI_2, 0.0],
        }
        .evaluate(&grid)
        .map_err(|e| e.to_string())?;
        let cost = RunningCost::new(state.density.clone(), vec![(2, quadratic)])
            .map_err(|e| e.to_string())?;
        let problem = MfgProblem {
            metric,
            cost,
            terminal_value: state.value.clone(),
            initial_density: state.density.clone(),
            value_boundary: stationary_boundary(&grid, &state.value),
            density_boundary: stationary_boundary(&grid, &state.density),
        };
        let params = FixedPointParams {
            tolerance: 1e-11,
            ..FixedPointParams::default()
        };
        let solution = solve_mfg(&problem, &params).map_err(|e| e.to_string())?;
        let value_dev = st_sup_diff(&solution.value, &SpaceTimeField::extend(&state.value));
        let density_dev = st_sup_diff(&solution.density, &SpaceTimeField::extend(&state.density));
        let dev = value_dev.max(density_dev);
        Ok((
            dev <= PERSISTENCE_SUP_TOL,
            format!(
                "sup deviation {dev:.2e} over 64 levels (gate {PERSISTENCE_SUP_TOL:.0e}), \
                 {} sweeps, {:.2}s",
                solution.sweeps,
                start.elapsed().as_secs_f64()
            ),
        ))
    })
}

/// Divided-difference remainders of the solution map must shrink at the
/// orders promised by its Taylor expansion: dropping the first-order term
/// leaves O(eps^2), dropping the second leaves O(eps^3).
pub fn linearization_order() -> CriterionReport {
    guarded("linearization order", || {
        let grid = Grid::new_1d(0.0, 1.0, 65, 0.4, 48).map_err(|e| e.to_string())?;
        let fam = crate::reference::ConformalFamily1d::standard();
        let metric = MetricField::isotropic(
            grid.clone(),
            (0..grid.n_nodes())
                .map(|i| fam.kappa(grid.coords(i)[0]))
                .collect(),
        )
        .map_err(|e| e.to_string())?;
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
        let state = solve_stationary(&grid, &metric, &u_trace, &m_trace, &NewtonParams::default())
            .map_err(|e| e.to_string())?;
        let cost = RunningCost::new(
            state.density.clone(),
            vec![
                (2, ScalarField::constant(grid.clone(), 2.0)),
                (3, ScalarField::constant(grid.clone(), 1.5)),
            ],
        )
        .map_err(|e| e.to_string())?;
        let direction = PerturbationSpec::from_config(
            &grid,
            &PerturbationConfig {
                label: "mixed".into(),
                u_space: Profile::Constant { value: 1.0 },
                u_time: Envelope::RampDown { power: 2 },
                m_space: Profile::Constant { value: 1.0 },
                m_time: Envelope::RampUp { power: 2 },
            },
        )
        .map_err(|e| e.to_string())?;
        let report = frechet_report(
            &state,
            &metric,
            &cost,
            &direction,
            &[1e-2, 5e-3, 2.5e-3],
            1.0,
            &FixedPointParams {
                tolerance: 1e-12,
                ..FixedPointParams::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let ok = within(FIRST_ORDER_SLOPE_BAND, report.first_slope)
            && within(SECOND_ORDER_SLOPE_BAND, report.second_slope);
        Ok((
            ok,
            format!(
                "first remainder slope {:.3} (band {:?}), second {:.3} (band {:?})",
                report.first_slope,
                FIRST_ORDER_SLOPE_BAND,
                report.second_slope,
                SECOND_ORDER_SLOPE_BAND
            ),
        ))
    })
}

/// The drift stored with a stationary state must equal twice the metric
/// applied to the value gradient, node by node, in 1D and 2D.
pub fn drift_identity() -> CriterionReport {
    guarded("drift identity", || {
        let mut worst = 0.0f64;
        for dim in [1usize, 2] {
            let grid = if dim == 1 {
                Grid::new_1d(0.0, 1.0, 129, 0.25, 8).map_err(|e| e.to_string())?
            } else {
                Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [17, 17], 0.25, 8)
                    .map_err(|e| e.to_string())?
            };
            let metric = MetricConfig {
                base: if dim == 1 {
                    BaseMetric::Identity
                } else {
                    BaseMetric::Full {
                        a11: Profile::Constant { value: 1.1 },
                        a12: Profile::Constant { value: 0.2 },
                        a22: Profile::Constant { value: 0.9 },
                    }
                },
                kappa: Profile::SineProduct {
                    mean: 1.0,
                    amplitude: 0.3,
                    frequency: [1, if dim == 1 { 0 } else { 1 }],
                    phase: [0.3, 0.7],
                },
            }
            .build(&grid)
            .map_err(|e| e.to_string())?;
            let u_trace: Vec<f64> = grid
                .sigma_nodes()
                .iter()
                .map(|&n| {
                    let x = grid.coords(n);
                    0.3 * x[0] - 0.1 * x[1]
                })
                .collect();
            let m_trace: Vec<f64> = grid
                .sigma_nodes()
                .iter()
                .map(|&n| {
                    let x = grid.coords(n);
                    1.0 + 0.2 * x[0] + 0.1 * x[1]
                })
                .collect();
            // The identity holds for whatever iterate the solver returns, so a
            // relaxed Newton tolerance avoids stalling on the rounding plateau
            // of the finer grid without weakening the check.
            let state = solve_stationary(
                &grid,
                &metric,
                &u_trace,
                &m_trace,
                &NewtonParams {
                    tolerance: 1e-10,
                    ..NewtonParams::default()
                },
            )
            .map_err(|e| e.to_string())?;
            let grad = ops::gradient(&state.value);
            for node in 0..grid.n_nodes() {
                let g = grad.at(node);
                let expected = metric.apply_at(node, g);
                let expected = [2.0 * expected[0], 2.0 * expected[1]];
                let stored = state.drift.at(node);
                let num = ((stored[0] - expected[0]).powi(2) + (stored[1] - expected[1]).powi(2))
                    .sqrt();
                let den = (expected[0].powi(2) + expected[1].powi(2)).sqrt().max(1e-300);
                worst = worst.max(num / den);
            }
        }
        Ok((
            worst <= DRIFT_IDENTITY_REL_TOL,
            format!(
                "worst nodewise relative gap {worst:.2e} across 1D and 2D states \
                 (gate {DRIFT_IDENTITY_REL_TOL:.0e})"
            ),
        ))
    })
}

/// Probe remainders must shrink as the large parameter grows, with no drift
/// and with a drift shaped like a stationary one, and the normalized gap
/// between the interior pairing and its leading term must fall monotonically
/// along the ladder.
pub fn probe_remainder_decay() -> CriterionReport {
    guarded("probe remainder decay", || {
        let grid = Grid::new_1d(0.0, 1.0, 65, 0.5, 64).map_err(|e| e.to_string())?;
        let metric = MetricField::isotropic(
            grid.clone(),
            (0..grid.n_nodes())
                .map(|i| 1.0 + 0.25 * (TAU * grid.coords(i)[0]).sin())
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let value_like = ScalarField::from_fn(grid.clone(), |x| {
            0.3 * x[0] + 0.05 * (TAU * x[0]).sin()
        });
        let cases: Vec<(&str, VectorField)> = vec![
            ("no drift", VectorField::from_fn(grid.clone(), |_| [0.0, 0.0])),
            ("stationary-shaped drift", drift_field(&metric, &value_like)),
        ];
        let ladder = [4.0, 8.0, 16.0];
        let dq = VectorField::from_fn(grid.clone(), |x| [0.04 + 0.03 * (TAU * x[0]).cos(), 0.0]);
        let mut detail = String::new();
        let mut ok = true;
        for (label, drift) in &cases {
            let mut forward_norms = Vec::new();
            let mut backward_norms = Vec::new();
            let mut gaps = Vec::new();
            for &rho in &ladder {
                let params = CgoParams {
                    zeta: [1.0, 0.0],
                    xi: [0.0, 0.0],
                    tau: 0.0,
                    rho,
                    window: (0.1, 0.4),
                }
                .validated(&grid)
                .map_err(|e| e.to_string())?;
                let amplitudes =
                    build_amplitudes(&grid, drift, params.clone()).map_err(|e| e.to_string())?;
                let pair = solve_probe_pair(&grid, drift, amplitudes).map_err(|e| e.to_string())?;
                let fwd = (ops::st_l2_norm(&pair.forward_remainder.re).powi(2)
                    + ops::st_l2_norm(&pair.forward_remainder.im).powi(2))
                .sqrt();
                forward_norms.push(fwd);
                backward_norms.push(ops::st_l2_norm(&pair.backward_remainder));
                let scale = window_transform(&grid, &pair.amplitudes.params) * (-rho);
                let lead = leading_term_pairing(&grid, &pair.amplitudes.params, &dq) / scale;
                let vol = volume_pairing(&pair, &dq) / scale;
                gaps.push((vol - lead).norm());
            }
            let decays = forward_norms[2] <= REMAINDER_DECAY_FACTOR * forward_norms[0]
                && backward_norms[2] <= REMAINDER_DECAY_FACTOR * backward_norms[0];
            let monotone = gaps[0] > gaps[1] && gaps[1] > gaps[2];
            ok &= decays && monotone;
            detail.push_str(&format!(
                "[{label}] forward norm {:.2e}->{:.2e} backward {:.2e}->{:.2e} across rho 4->16, \
                 pairing gap {:.2e}>{:.2e}>{:.2e}; ",
                forward_norms[0],
                forward_norms[2],
                backward_norms[0],
                backward_norms[2],
                gaps[0],
                gaps[1],
                gaps[2]
            ));
        }
        detail.push_str(&format!(
            "gates: top-of-ladder norm <= {REMAINDER_DECAY_FACTOR} x bottom, gaps strictly falling"
        ));
        Ok((ok, detail))
    })
}

/// The normalized leading pairing of a probe must read off the discrete
/// Fourier coefficient of a bandlimited drift discrepancy contracted with the
/// ray direction.
pub fn fourier_pairing() -> CriterionReport {
    guarded("fourier pairing", || {
        let grid = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [33, 33], 0.25, 16)
            .map_err(|e| e.to_string())?;
        let ray = |x: [f64; 2]| 0.1 + 0.2 * (TAU * x[0]).cos() + 0.15 * (2.0 * TAU * x[0]).sin();
        // Difference of two drifts; only the difference needs to be bandlimited.
        let q_one = |x: [f64; 2]| [0.05, 0.3 + ray(x)];
        let q_two = |_x: [f64; 2]| [0.05, 0.3];
        let dq = VectorField::from_fn(grid.clone(), |x| {
            let a = q_one(x);
            let b = q_two(x);
            [a[0] - b[0], a[1] - b[1]]
        });
        let samples: Vec<f64> = (0..32).map(|i| ray([i as f64 / 32.0, 0.0])).collect();
        let spectrum = dft(&samples);
        let mut worst = 0.0f64;
        let mut parts = Vec::new();
        for mode in 0..=2usize {
            let params = CgoParams {
                zeta: [0.0, 1.0],
                xi: [mode as f64 * TAU, 0.0],
                tau: 0.0,
                rho: 8.0,
                window: (0.05, 0.2),
            }
            .validated(&grid)
            .map_err(|e| e.to_string())?;
            let estimate = leading_term_pairing(&grid, &params, &dq)
                / (window_transform(&grid, &params) * (-params.rho));
            let reference = Complex64::new(spectrum[mode].0, spectrum[mode].1) / 32.0;
            let rel = (estimate - reference).norm() / reference.norm();
            worst = worst.max(rel);
            parts.push(format!("mode {mode}: {rel:.2e}"));
        }
        Ok((
            worst <= PAIRING_REL_TOL,
            format!(
                "relative gap to DFT {} (gate {PAIRING_REL_TOL})",
                parts.join(", ")
            ),
        ))
    })
}

/// Shared benchmark world for the reconstruction checks: 1D, conformal sine
/// factor, quadratic plus optional cubic cost, three boundary excitations
/// (one carrying only density data so the cost stage sees no quadratic
/// drift cross-term from its own value response).
pub fn reconstruction_benchmark_config(
    n_nodes: usize,
    n_time: usize,
    noise_level: f64,
    discrepancy: bool,
    max_cost_order: usize,
) -> ExperimentConfig {
    let span = (n_nodes - 1) as f64;
    let mut coefficients = vec![CostCoefficient {
        order: 2,
        profile: Profile::SineProduct {
            mean: 1.2,
            amplitude: 0.4,
            frequency: [1, 0],
            phase: [FRAC_PI_2, 0.0],
        },
    }];
    if max_cost_order >= 3 {
        coefficients.push(CostCoefficient {
            order: 3,
            profile: Profile::SineProduct {
                mean: 0.8,
                amplitude: 0.3,
                frequency: [1, 0],
                phase: [0.0, 0.0],
            },
        });
    }
    ExperimentConfig {
        grid: GridConfig {
            dim: 1,
            extent: vec![[0.0, 1.0]],
            n_cells: vec![n_nodes],
            t_horizon: 0.25,
            n_time,
        },
        metric: MetricConfig {
            base: BaseMetric::Identity,
            kappa: Profile::SineProduct {
                mean: 1.0,
                amplitude: 0.3,
                frequency: [1, 0],
                phase: [0.0, 0.0],
            },
        },
        cost: CostConfig { coefficients },
        stationary: StationaryConfig {
            u_trace: Profile::Nodes {
                values: (0..n_nodes).map(|i| 0.3 * i as f64 / span).collect(),
            },
            m_trace: Profile::Nodes {
                values: (0..n_nodes).map(|i| 1.0 + 0.2 * i as f64 / span).collect(),
            },
        },
        perturbations: vec![
            PerturbationConfig {
                label: "left".into(),
                u_space: Profile::Constant { value: 1.0 },
                u_time: Envelope::RampDown { power: 2 },
                m_space: Profile::Constant { value: 1.0 },
                m_time: Envelope::RampUp { power: 2 },
            },
            PerturbationConfig {
                label: "tilt".into(),
                u_space: Profile::SineProduct {
                    mean: 0.5,
                    amplitude: 0.5,
                    frequency: [1, 0],
                    phase: [FRAC_PI_2, 0.0],
                },
                u_time: Envelope::RampDown { power: 2 },
                m_space: Profile::Constant { value: 0.8 },
                m_time: Envelope::TimeBump {
                    start: 0.1,
                    end: 0.9,
                },
            },
            PerturbationConfig {
                label: "feed".into(),
                u_space: Profile::Constant { value: 0.0 },
                u_time: Envelope::RampDown { power: 2 },
                m_space: Profile::SineProduct {
                    mean: 1.0,
                    amplitude: 0.3,
                    frequency: [1, 0],
                    phase: [0.0, 0.0],
                },
                m_time: Envelope::RampUp { power: 1 },
            },
            PerturbationConfig {
                label: "wave".into(),
                u_space: Profile::SineProduct {
                    mean: 0.3,
                    amplitude: 0.4,
                    frequency: [2, 0],
                    phase: [0.0, 0.0],
                },
                u_time: Envelope::RampDown { power: 1 },
                m_space: Profile::Constant { value: 0.5 },
                m_time: Envelope::TimeBump {
                    start: 0.05,
                    end: 0.6,
                },
            },
        ],
        probe: None,
        reconstruction: Some(ReconstructionSettings {
            mode: RecoveryMode::Variational,
            epsilons: vec![1e-2, 5e-3],
            tikhonov_lambda: 1e-10,
            discrepancy_principle: discrepancy,
            noise_level,
            max_cost_order,
        }),
        run: RunConfig {
            label: "acceptance-bench".into(),
            seed: 20260823,
        },
    }
}

fn coefficient_error(errors: &[(usize, f64)], order: usize) -> Option<f64> {
    errors.iter().find(|(k, _)| *k == order).map(|(_, e)| *e)
}

/// Noiseless end-to-end reconstruction on the 129-node benchmark: drift,
/// value, conformal factor, density, and the first two cost coefficients all
/// land inside their budgets.
pub fn end_to_end_reconstruction() -> CriterionReport {
    guarded("end-to-end reconstruction", || {
        let start = Instant::now();
        let config = reconstruction_benchmark_config(129, 128, 0.0, false, 3);
        let out = run_pipeline(&config).map_err(|e| e.to_string())?;
        let e = &out.errors;
        let quad = coefficient_error(&e.coefficients, 2)
            .ok_or_else(|| "no quadratic coefficient in the summary".to_string())?;
        let cubic = coefficient_error(&e.coefficients, 3)
            .ok_or_else(|| "no cubic coefficient in the summary".to_string())?;
        let ok = e.drift <= STATE_REL_TOL
            && e.value <= STATE_REL_TOL
            && e.conformal <= STATE_REL_TOL
            && e.density <= STATE_REL_TOL
            && quad <= QUADRATIC_REL_TOL
            && cubic <= CUBIC_REL_TOL;
        Ok((
            ok,
            format!(
                "drift {:.2e}, value {:.2e}, conformal {:.2e} (coverage {:.0}%), density {:.2e} \
                 (gates {STATE_REL_TOL}); quadratic {:.2e} (gate {QUADRATIC_REL_TOL}), cubic \
                 {:.2e} (gate {CUBIC_REL_TOL}); {:.0}s",
                e.drift,
                e.value,
                e.conformal,
                100.0 * e.conformal_coverage,
                e.density,
                quad,
                cubic,
                start.elapsed().as_secs_f64()
            ),
        ))
    })
}

fn max_record_distance(
    a: &crate::inverse::ExtractedRecords,
    b: &crate::inverse::ExtractedRecords,
    order: usize,
) -> f64 {
    a.records
        .iter()
        .zip(&b.records)
        .map(|(ra, rb)| match order {
            1 => ra.first.difference(&rb.first).sup_norm(),
            2 => ra.second.difference(&rb.second).sup_norm(),
            _ => unreachable!("orders 1 and 2 are compared"),
        })
        .fold(0.0f64, f64::max)
}

/// Same config twice gives the same measurements; changing the quadratic
/// coefficient by a half-period sine moves the second-order records far above
/// the extraction's own discretization floor.
pub fn measurement_uniqueness_gate() -> CriterionReport {
    guarded("measurement uniqueness gate", || {
        let base = || {
            let mut c = reconstruction_benchmark_config(65, 64, 0.0, false, 2);
            c.reconstruction = c.reconstruction.map(|mut r| {
                r.epsilons = vec![1e-2];
                r
            });
            c
        };
        let extract = |config: &ExperimentConfig| -> Result<crate::inverse::ExtractedRecords, String> {
            let truth = build_truth(config).map_err(|e| e.to_string())?;
            extract_measurements(config, &truth).map_err(|e| e.to_string())
        };

        // Replay: two worlds built independently from the same words.
        let first = extract(&base())?;
        let second = extract(&base())?;
        let replay = max_record_distance(&first, &second, 1)
            .max(max_record_distance(&first, &second, 2));

        // Separation: add a half-period sine to the quadratic coefficient.
        let mut other = base();
        let bumped: Vec<f64> = (0..65)
            .map(|i| {
                let x = i as f64 / 64.0;
                1.2 + 0.4 * (TAU * x + FRAC_PI_2).sin() + (PI * x).sin()
            })
            .collect();
        other.cost.coefficients[0].profile = Profile::Nodes { values: bumped };
        let distinct = extract(&other)?;
        let separation = max_record_distance(&first, &distinct, 2);

        // Floor: rerun the unchanged world with the halved step; the gap
        // between the two second-order extractions is the truncation noise a
        // real separation must clear.
        let mut finer = base();
        finer.reconstruction = finer.reconstruction.map(|mut r| {
            r.epsilons = vec![5e-3];
            r
        });
        let refined = extract(&finer)?;
        let floor = max_record_distance(&first, &refined, 2);

        let ok = replay <= REPLAY_SUP_TOL && separation >= SEPARATION_MARGIN * floor;
        Ok((
            ok,
            format!(
                "replay distance {replay:.2e} (gate {REPLAY_SUP_TOL:.0e}); separation \
                 {separation:.2e} vs floor {floor:.2e} (margin {SEPARATION_MARGIN}x)"
            ),
        ))
    })
}

/// Differential operators are exact on affine fields, and the discrete
/// duality between gradient and divergence holds to rounding, in 1D and 2D.
pub fn operator_exactness() -> CriterionReport {
    guarded("operator exactness", || {
        let eps = f64::EPSILON;
        let mut worst_scaled = 0.0f64;
        let mut parts = Vec::new();
        for dim in [1usize, 2] {
            let grid = if dim == 1 {
                Grid::new_1d(0.0, 1.0, 33, 0.25, 8).map_err(|e| e.to_string())?
            } else {
                Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [17, 17], 0.25, 8)
                    .map_err(|e| e.to_string())?
            };
            let h = grid.h();
            let h_min = if dim == 1 { h[0] } else { h[0].min(h[1]) };
            let beta = if dim == 1 { [0.3, 0.0] } else { [0.3, -0.2] };
            let affine = ScalarField::from_fn(grid.clone(), |x| {
                0.7 + beta[0] * x[0] + beta[1] * x[1]
            });

            let grad = ops::gradient(&affine);
            let mut grad_err = 0.0f64;
            for node in 0..grid.n_nodes() {
                let g = grad.at(node);
                grad_err = grad_err.max((g[0] - beta[0]).abs().max((g[1] - beta[1]).abs()));
            }
            worst_scaled = worst_scaled.max(grad_err / (eps / h_min));

            let lap = ops::laplacian(&affine);
            let lap_err = (0..grid.n_nodes()).fold(0.0f64, |w, n| w.max(lap.at(n).abs()));
            worst_scaled = worst_scaled.max(lap_err / (eps / (h_min * h_min)));

            let affine_vec = VectorField::from_fn(grid.clone(), |x| {
                [
                    0.2 + 0.4 * x[0] - 0.1 * x[1],
                    -0.3 + 0.25 * x[0] + 0.35 * x[1],
                ]
            });
            let expected_div = if dim == 1 { 0.4 } else { 0.4 + 0.35 };
            let div = ops::divergence(&affine_vec);
            let div_err =
                (0..grid.n_nodes()).fold(0.0f64, |w, n| w.max((div.at(n) - expected_div).abs()));
            worst_scaled = worst_scaled.max(div_err / (eps / h_min));

            if dim == 1 {
                let nd = ops::normal_derivative_scalar(&affine);
                let mid = 0.5;
                let mut nd_err = 0.0f64;
                for (slot, &node) in grid.sigma_nodes().iter().enumerate() {
                    let expected = if grid.coords(node)[0] < mid {
                        -beta[0]
                    } else {
                        beta[0]
                    };
                    nd_err = nd_err.max((nd[slot] - expected).abs());
                }
                worst_scaled = worst_scaled.max(nd_err / (eps / h_min));
            }

            // Duality: <grad f, v> + <f, div v> equals the boundary flux.
            let f = ScalarField::from_fn(grid.clone(), |x| {
                0.3 + 0.2 * (TAU * x[0]).sin() + 0.1 * x[1] * x[1]
            });
            let v = VectorField::from_fn(grid.clone(), |x| {
                [
                    0.1 + 0.3 * (TAU * x[0]).cos() + 0.05 * x[1],
                    if dim == 1 { 0.0 } else { -0.2 + 0.15 * (TAU * x[1]).sin() },
                ]
            });
            let t1 = ops::inner_product_vec(&ops::gradient(&f), &v);
            let t2 = ops::inner_product(&f, &ops::divergence(&v));
            let t3 = ops::boundary_flux(&f, &v);
            let residual = (t1 + t2 - t3).abs();
            let scale = t1.abs() + t2.abs() + t3.abs();
            worst_scaled = worst_scaled.max(residual / (eps * scale.max(1.0)));
            parts.push(format!(
                "{dim}D duality residual {residual:.2e} against scale {scale:.2}"
            ));
        }
        Ok((
            worst_scaled <= EXACTNESS_EPS_MULTIPLE,
            format!(
                "worst identity residual {worst_scaled:.2} machine epsilons \
                 (gate {EXACTNESS_EPS_MULTIPLE}); {}",
                parts.join("; ")
            ),
        ))
    })
}

/// Manufactured solutions: a field affine in space isolates the O(dt) time
/// error of the implicit march; a field linear in time isolates the O(h^2)
/// space error of both marches.
pub fn convergence_orders() -> CriterionReport {
    guarded("convergence orders", || {
        // Time order, backward march: y = (1 + x/2) e^{-t}, drift b = 0.3.
        let temporal_error = |n_time: usize| -> Result<f64, String> {
            let grid = Grid::new_1d(0.0, 1.0, 33, 0.5, n_time).map_err(|e| e.to_string())?;
            let exact = |x: [f64; 2], t: f64| (1.0 + 0.5 * x[0]) * (-t).exp();
            let coeffs =
                OperatorCoeffs::advective(VectorField::from_fn(grid.clone(), |_| [0.3, 0.0]));
            let timeline = CoeffTimeline::Static(coeffs);
            let terminal = ScalarField::from_fn(grid.clone(), |x| exact(x, 0.5));
            let boundary = BoundaryData::from_fn(grid.clone(), BoundaryKind::Trace, exact);
            let grid_for_source = grid.clone();
            let source = move |level: usize, buf: &mut [f64]| {
                let t = grid_for_source.t(level);
                for node in 0..grid_for_source.n_nodes() {
                    let x = grid_for_source.coords(node);
                    // -dy/dt - (lap y + b . grad y) with lap y = 0.
                    buf[node] = exact(x, t) - 0.3 * 0.5 * (-t).exp();
                }
            };
            let solved = march_backward(
                &grid,
                &timeline,
                1.0,
                &terminal,
                &boundary,
                SourceSpec::Func(&source),
            )
            .map_err(|e| e.to_string())?;
            Ok(st_l2_diff(&solved, &SpaceTimeField::from_fn(grid.clone(), exact)))
        };
        let t_coarse = temporal_error(32)?;
        let t_fine = temporal_error(64)?;
        let temporal_order = (t_coarse / t_fine).log2();

        // Space order, backward march: y = sin(2 pi x)(1 + t), linear in time.
        let spatial_error_backward = |n_nodes: usize| -> Result<f64, String> {
            let grid = Grid::new_1d(0.0, 1.0, n_nodes, 0.25, 32).map_err(|e| e.to_string())?;
            let exact = |x: [f64; 2], t: f64| (TAU * x[0]).sin() * (1.0 + t);
            let coeffs =
                OperatorCoeffs::advective(VectorField::from_fn(grid.clone(), |_| [0.3, 0.0]));
            let timeline = CoeffTimeline::Static(coeffs);
            let terminal = ScalarField::from_fn(grid.clone(), |x| exact(x, 0.25));
            let boundary = BoundaryData::from_fn(grid.clone(), BoundaryKind::Trace, exact);
            let grid_for_source = grid.clone();
            let source = move |level: usize, buf: &mut [f64]| {
                let t = grid_for_source.t(level);
                for node in 0..grid_for_source.n_nodes() {
                    let x = grid_for_source.coords(node)[0];
                    let lap = -TAU * TAU * (TAU * x).sin() * (1.0 + t);
                    let adv = 0.3 * TAU * (TAU * x).cos() * (1.0 + t);
                    buf[node] = -(TAU * x).sin() - lap - adv;
                }
            };
            let solved = march_backward(
                &grid,
                &timeline,
                1.0,
                &terminal,
                &boundary,
                SourceSpec::Func(&source),
            )
            .map_err(|e| e.to_string())?;
            Ok(st_l2_diff(&solved, &SpaceTimeField::from_fn(grid.clone(), exact)))
        };
        let sb_coarse = spatial_error_backward(33)?;
        let sb_fine = spatial_error_backward(65)?;
        let spatial_backward = (sb_coarse / sb_fine).log2();

        // Space order, forward march with conservative drift w = 0.2.
        let spatial_error_forward = |n_nodes: usize| -> Result<f64, String> {
            let grid = Grid::new_1d(0.0, 1.0, n_nodes, 0.25, 32).map_err(|e| e.to_string())?;
            let exact = |x: [f64; 2], t: f64| (TAU * x[0]).sin() * (1.0 + t);
            let coeffs =
                OperatorCoeffs::conservative(VectorField::from_fn(grid.clone(), |_| [0.2, 0.0]));
            let timeline = CoeffTimeline::Static(coeffs);
            let initial = ScalarField::from_fn(grid.clone(), |x| exact(x, 0.0));
            let boundary = BoundaryData::from_fn(grid.clone(), BoundaryKind::Trace, exact);
            let grid_for_source = grid.clone();
            let source = move |level: usize, buf: &mut [f64]| {
                let t = grid_for_source.t(level);
                for node in 0..grid_for_source.n_nodes() {
                    let x = grid_for_source.coords(node)[0];
                    let lap = -TAU * TAU * (TAU * x).sin() * (1.0 + t);
                    let transport = 0.2 * TAU * (TAU * x).cos() * (1.0 + t);
                    buf[node] = (TAU * x).sin() - lap - transport;
                }
            };
            let solved = march_forward(
                &grid,
                &timeline,
                1.0,
                &initial,
                &boundary,
                SourceSpec::Func(&source),
            )
            .map_err(|e| e.to_string())?;
            Ok(st_l2_diff(&solved, &SpaceTimeField::from_fn(grid.clone(), exact)))
        };
        let sf_coarse = spatial_error_forward(33)?;
        let sf_fine = spatial_error_forward(65)?;
        let spatial_forward = (sf_coarse / sf_fine).log2();

        let ok = within(TEMPORAL_ORDER_BAND, temporal_order)
            && within(SPATIAL_ORDER_BAND, spatial_backward)
            && within(SPATIAL_ORDER_BAND, spatial_forward);
        Ok((
            ok,
            format!(
                "temporal order {temporal_order:.3} (band {TEMPORAL_ORDER_BAND:?}); spatial order \
                 {spatial_backward:.3} backward / {spatial_forward:.3} forward \
                 (band {SPATIAL_ORDER_BAND:?})"
            ),
        ))
    })
}

/// One percent relative noise on every boundary record, penalty weight from
/// the discrepancy principle: the quadratic coefficient stays inside its
/// degraded budget.
pub fn noise_robustness() -> CriterionReport {
    guarded("noise robustness", || {
        let start = Instant::now();
        let config = reconstruction_benchmark_config(65, 64, 0.01, true, 2);
        let out = run_pipeline(&config).map_err(|e| e.to_string())?;
        let quad = coefficient_error(&out.errors.coefficients, 2)
            .ok_or_else(|| "no quadratic coefficient in the summary".to_string())?;
        Ok((
            quad <= NOISY_QUADRATIC_REL_TOL,
            format!(
                "quadratic coefficient error {quad:.2e} at 1% record noise \
                 (gate {NOISY_QUADRATIC_REL_TOL}); drift {:.2e}, {:.0}s",
                out.errors.drift,
                start.elapsed().as_secs_f64()
            ),
        ))
    })
}

/// Every check in declaration order.
pub fn run_all() -> Vec<CriterionReport> {
    vec![
        stationary_persistence(),
        linearization_order(),
        drift_identity(),
        probe_remainder_decay(),
        fourier_pairing(),
        end_to_end_reconstruction(),
        measurement_uniqueness_gate(),
        operator_exactness(),
        convergence_orders(),
        noise_robustness(),
    ]
}
