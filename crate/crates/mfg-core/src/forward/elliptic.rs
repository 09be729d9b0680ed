//! Steady solves: the linear Dirichlet problem `-(L y) = s`, the quadratic
//! stationary value equation, and the stationary pair.
//!
//! The stationary system splits into a quadratic scalar problem for the
//! value and, given its drift, a linear problem for the density:
//!
//! ```text
//! -Delta u + grad(u)^T A grad(u) = 0,         u|_Gamma given,
//! -Delta m - div(m q) = 0,  q = 2 A grad u,   m|_Gamma given.
//! ```
//!
//! Both draw their rows from [`operator`], the same assembly the time
//! steppers use, which is what makes a solved stationary pair an exact fixed
//! point of the time-dependent march.

use std::sync::Arc;

use super::operator::{self, OperatorCoeffs};
use super::parabolic::NewtonParams;
use crate::error::SolverError;
use crate::fields::{ops, Grid, MetricField, ScalarField, VectorField};

/// Solve `-(L y) = s` with Dirichlet values (ordered like `sigma_nodes`).
pub fn solve_steady(
    grid: &Arc<Grid>,
    coeffs: &OperatorCoeffs,
    source: Option<&ScalarField>,
    dirichlet: &[f64],
) -> Result<ScalarField, SolverError> {
    if dirichlet.len() != grid.sigma_len() {
        return Err(SolverError::InvalidInput(format!(
            "dirichlet data has {} entries for {} boundary nodes",
            dirichlet.len(),
            grid.sigma_len()
        )));
    }
    let mat = operator::assemble(grid, coeffs, 0.0, -1.0);
    let lu = mat.factor()?;
    let mut rhs = vec![0.0; grid.n_nodes()];
    if let Some(s) = source {
        for node in 0..grid.n_nodes() {
            if !grid.is_boundary(node) {
                rhs[node] = s.at(node);
            }
        }
    }
    for (pos, &node) in grid.sigma_nodes().iter().enumerate() {
        rhs[node] = dirichlet[pos];
    }
    lu.solve_in_place(&mut rhs);
    ScalarField::new(grid.clone(), rhs)
        .map_err(|e| SolverError::InvalidInput(format!("steady solution: {e}")))
}

/// Drift induced by a value field: `q = 2 A grad u`, with the one-sided
/// gradient closure on the boundary.  Every consumer of the drift — the
/// stationary density solve, the time-dependent density march, and the
/// linearized systems — must build it through this function so their
/// coefficients agree to the last bit.
pub fn drift_field(metric: &MetricField, value: &ScalarField) -> VectorField {
    let mut q = metric.apply(&ops::gradient(value));
    q.scale(2.0);
    q
}

/// Damped Newton for the quadratic stationary value equation.
pub fn solve_stationary_value(
    grid: &Arc<Grid>,
    metric: &MetricField,
    trace: &[f64],
    params: &NewtonParams,
) -> Result<ScalarField, SolverError> {
    if trace.len() != grid.sigma_len() {
        return Err(SolverError::InvalidInput(
            "stationary value trace length mismatch".into(),
        ));
    }
    let n = grid.n_nodes();
    // Harmonic extension of the trace as the initial iterate.
    let mut v = solve_steady(grid, &OperatorCoeffs::diffusion_only(), None, trace)?
        .into_values();
    let scale = 1.0 + trace.iter().fold(0.0f64, |m, t| m.max(t.abs()));

    let mut grad = vec![vec![0.0; n]; grid.dim()];
    let mut lap = vec![0.0; n];
    let mut g_vec = vec![0.0; n];

    let eval = |v: &[f64], grad: &mut [Vec<f64>], lap: &mut [f64], g: &mut [f64]| -> f64 {
        ops::gradient_slices(grid, v, grad);
        ops::laplacian_slice(grid, v, lap);
        let mut sup = 0.0f64;
        for node in 0..n {
            g[node] = if grid.is_boundary(node) {
                let pos = grid.sigma_pos(node).expect("boundary node");
                v[node] - trace[pos]
            } else {
                let gv = [
                    grad[0][node],
                    if grid.dim() == 2 { grad[1][node] } else { 0.0 },
                ];
                -lap[node] + metric.quadratic_at(node, gv, gv)
            };
            sup = sup.max(g[node].abs());
        }
        sup
    };

    let mut g_norm = eval(&v, &mut grad, &mut lap, &mut g_vec);
    for iteration in 0..params.max_iterations {
        if g_norm <= params.tolerance * scale {
            let field = ScalarField::new(grid.clone(), v)
                .map_err(|e| SolverError::InvalidInput(format!("stationary value: {e}")))?;
            return Ok(field);
        }
        // J = -Delta + 2 (A grad v) . grad  ==  -(Delta + b . grad) with
        // b = -2 A grad v.
        let drift = VectorField::from_indexed_fn(metric.grid().clone(), |node| {
            let gv = [
                grad[0][node],
                if grid.dim() == 2 { grad[1][node] } else { 0.0 },
            ];
            let ag = metric.apply_at(node, gv);
            [-2.0 * ag[0], -2.0 * ag[1]]
        });
        let jac = operator::assemble(grid, &OperatorCoeffs::advective(drift), 0.0, -1.0);
        let lu = jac
            .factor()
            .map_err(|e| SolverError::IndefiniteJacobian { iteration, source: e })?;
        let delta = lu.solve(&g_vec);
        let mut t = 1.0;
        let mut accepted = false;
        let mut candidate = vec![0.0; n];
        for _ in 0..=params.max_halvings {
            for i in 0..n {
                candidate[i] = v[i] - t * delta[i];
            }
            let trial = eval(&candidate, &mut grad, &mut lap, &mut g_vec);
            if trial < g_norm || trial <= params.tolerance * scale {
                v.copy_from_slice(&candidate);
                g_norm = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(SolverError::NonConvergence {
                context: "stationary value Newton: line search stalled".into(),
                iterations: iteration + 1,
                residual: g_norm,
                tolerance: params.tolerance * scale,
            });
        }
    }
    Err(SolverError::NonConvergence {
        context: "stationary value Newton".into(),
        iterations: params.max_iterations,
        residual: g_norm,
        tolerance: params.tolerance * scale,
    })
}

/// Linear solve for the stationary density given the value field.
pub fn solve_stationary_density(
    grid: &Arc<Grid>,
    metric: &MetricField,
    value: &ScalarField,
    trace: &[f64],
) -> Result<ScalarField, SolverError> {
    let q = drift_field(metric, value);
    solve_steady(grid, &OperatorCoeffs::conservative(q), None, trace)
}

/// A stationary pair with its induced drift.
#[derive(Debug, Clone)]
pub struct StationaryState {
    pub value: ScalarField,
    pub density: ScalarField,
    pub drift: VectorField,
}

pub fn solve_stationary(
    grid: &Arc<Grid>,
    metric: &MetricField,
    value_trace: &[f64],
    density_trace: &[f64],
    params: &NewtonParams,
) -> Result<StationaryState, SolverError> {
    let value = solve_stationary_value(grid, metric, value_trace, params)?;
    let density = solve_stationary_density(grid, metric, &value, density_trace)?;
    let drift = drift_field(metric, &value);
    Ok(StationaryState {
        value,
        density,
        drift,
    })
}

/// Interior sup-norms of the two stationary equation residuals, evaluated
/// with the same matrix-free rows the solvers assemble.
pub fn stationary_residual(
    grid: &Grid,
    metric: &MetricField,
    value: &ScalarField,
    density: &ScalarField,
) -> (f64, f64) {
    let n = grid.n_nodes();
    let mut grad = vec![vec![0.0; n]; grid.dim()];
    let mut lap = vec![0.0; n];
    ops::gradient_slices(grid, value.values(), &mut grad);
    ops::laplacian_slice(grid, value.values(), &mut lap);
    let mut r_value = 0.0f64;
    for node in 0..n {
        if grid.is_boundary(node) {
            continue;
        }
        let gv = [
            grad[0][node],
            if grid.dim() == 2 { grad[1][node] } else { 0.0 },
        ];
        r_value = r_value.max((-lap[node] + metric.quadratic_at(node, gv, gv)).abs());
    }
    let q = drift_field(metric, value);
    let mut lm = vec![0.0; n];
    operator::apply(
        grid,
        &OperatorCoeffs::conservative(q),
        density.values(),
        &mut lm,
    );
    let mut r_density = 0.0f64;
    for node in 0..n {
        if !grid.is_boundary(node) {
            r_density = r_density.max(lm[node].abs());
        }
    }
    (r_value, r_density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{ConformalFamily1d, HarmonicFamily2d};

    #[test]
    fn steady_solve_exact_on_quadratics() {
        // Constant coefficients, quadratic solution: all stencils are exact,
        // so the solver must reproduce the polynomial to rounding.
        let grid = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [9, 9], 1.0, 2).unwrap();
        let exact = |x: [f64; 2]| 1.0 + 2.0 * x[0] - x[1] + x[0] * x[0] + 0.5 * x[0] * x[1];
        let b = [0.4, -0.8];
        let w = [1.1, 0.3];
        let c = -2.0;
        let coeffs = OperatorCoeffs {
            advective: Some(VectorField::from_fn(grid.clone(), |_| b)),
            divergence_drift: Some(VectorField::from_fn(grid.clone(), |_| w)),
            potential: Some(ScalarField::constant(grid.clone(), c)),
        };
        // -L y = -(Delta y + b . grad y + div(y w) + c y); all terms analytic.
        let source = ScalarField::from_fn(grid.clone(), |x| {
            let y = exact(x);
            let grad = [2.0 + 2.0 * x[0] + 0.5 * x[1], -1.0 + 0.5 * x[0]];
            let lap = 2.0;
            -(lap + b[0] * grad[0] + b[1] * grad[1] + w[0] * grad[0] + w[1] * grad[1] + c * y)
        });
        let dirichlet: Vec<f64> = grid
            .sigma_nodes()
            .iter()
            .map(|&node| exact(grid.coords(node)))
            .collect();
        let y = solve_steady(&grid, &coeffs, Some(&source), &dirichlet).unwrap();
        let exact_field = ScalarField::from_fn(grid.clone(), exact);
        assert!(
            y.sup_distance(&exact_field) < 1e-11,
            "polynomial defect {}",
            y.sup_distance(&exact_field)
        );
    }

    fn conformal_errors(n_cells: usize) -> (f64, f64) {
        let fam = ConformalFamily1d::standard();
        let grid = Grid::new_1d(0.0, 1.0, n_cells, 1.0, 2).unwrap();
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
            .map(|&node| fam.value(grid.coords(node)[0]))
            .collect();
        let m_trace: Vec<f64> = grid
            .sigma_nodes()
            .iter()
            .map(|&node| fam.density(grid.coords(node)[0]))
            .collect();
        let state = solve_stationary(
            &grid,
            &metric,
            &u_trace,
            &m_trace,
            &NewtonParams {
                tolerance: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        let u_exact = ScalarField::from_fn(grid.clone(), |x| fam.value(x[0]));
        let m_exact = ScalarField::from_fn(grid.clone(), |x| fam.density(x[0]));
        (
            state.value.sup_distance(&u_exact),
            state.density.sup_distance(&m_exact),
        )
    }

    #[test]
    fn stationary_pair_converges_to_conformal_family() {
        let (eu_c, em_c) = conformal_errors(33);
        let (eu_f, em_f) = conformal_errors(65);
        assert!(eu_f < 2e-5, "value error {eu_f}");
        assert!(em_f < 2e-4, "density error {em_f}");
        let ru = eu_c / eu_f;
        let rm = em_c / em_f;
        assert!((2.8..5.5).contains(&ru), "value refinement ratio {ru}");
        assert!((2.8..5.5).contains(&rm), "density refinement ratio {rm}");
    }

    fn harmonic_errors(n: usize) -> (f64, f64) {
        let fam = HarmonicFamily2d;
        let grid = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [n, n], 1.0, 2).unwrap();
        let metric = MetricField::isotropic(grid.clone(), vec![1.0; grid.n_nodes()]).unwrap();
        let u_trace: Vec<f64> = grid
            .sigma_nodes()
            .iter()
            .map(|&node| {
                let x = grid.coords(node);
                fam.value(x[0], x[1])
            })
            .collect();
        let m_trace: Vec<f64> = grid
            .sigma_nodes()
            .iter()
            .map(|&node| {
                let x = grid.coords(node);
                fam.density(x[0], x[1])
            })
            .collect();
        let state =
            solve_stationary(&grid, &metric, &u_trace, &m_trace, &NewtonParams::default())
                .unwrap();
        let u_exact = ScalarField::from_fn(grid.clone(), |x| fam.value(x[0], x[1]));
        let m_exact = ScalarField::from_fn(grid.clone(), |x| fam.density(x[0], x[1]));
        (
            state.value.sup_distance(&u_exact),
            state.density.sup_distance(&m_exact),
        )
    }

    #[test]
    fn stationary_pair_converges_to_harmonic_family() {
        let (eu_c, em_c) = harmonic_errors(9);
        let (eu_f, em_f) = harmonic_errors(17);
        assert!(eu_f < 5e-4, "value error {eu_f}");
        assert!(em_f < 5e-3, "density error {em_f}");
        assert!(eu_c / eu_f > 2.5, "value ratio {}", eu_c / eu_f);
        assert!(em_c / em_f > 2.5, "density ratio {}", em_c / em_f);
    }

    #[test]
    fn solved_pair_has_tiny_discrete_residual() {
        let fam = ConformalFamily1d::standard();
        let grid = Grid::new_1d(0.0, 1.0, 65, 1.0, 2).unwrap();
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
            .map(|&node| fam.value(grid.coords(node)[0]))
            .collect();
        let m_trace: Vec<f64> = grid
            .sigma_nodes()
            .iter()
            .map(|&node| fam.density(grid.coords(node)[0]))
            .collect();
        let state = solve_stationary(
            &grid,
            &metric,
            &u_trace,
            &m_trace,
            &NewtonParams {
                tolerance: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        let (ru, rm) = stationary_residual(&grid, &metric, &state.value, &state.density);
        assert!(ru < 1e-10, "value residual {ru}");
        assert!(rm < 1e-9, "density residual {rm}");
    }
}
