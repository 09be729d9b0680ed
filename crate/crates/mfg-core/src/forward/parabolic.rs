//! Theta-scheme time marching for linear parabolic problems, plus the
//! per-step Newton march for the quadratic backward equation.
//!
//! Forward orientation solves  `dy/dt = L y + s`  from the initial level;
//! backward orientation solves  `-dy/dt = L y + s`  from the terminal level.
//! `theta = 1` is implicit Euler (first order in time), `theta = 0.5` the
//! trapezoid rule.  Dirichlet values are imposed on every boundary node at
//! the unknown's level.  When the coefficients are time-independent the
//! implicit matrix is factored once and reused across all steps.

use super::operator::{self, OperatorCoeffs};
use crate::error::SolverError;
use crate::fields::{BoundaryData, Grid, MetricField, ScalarField, SpaceTimeField};
use crate::linalg::{BandLu, BandMatrix};

/// Coefficients over the time axis: one set for all levels, or one per level.
pub enum CoeffTimeline {
    Static(OperatorCoeffs),
    PerLevel(Vec<OperatorCoeffs>),
}

impl CoeffTimeline {
    pub fn at(&self, level: usize) -> &OperatorCoeffs {
        match self {
            CoeffTimeline::Static(c) => c,
            CoeffTimeline::PerLevel(v) => &v[level],
        }
    }

    fn is_static(&self) -> bool {
        matches!(self, CoeffTimeline::Static(_))
    }

    fn check(&self, grid: &Grid) -> Result<(), SolverError> {
        if let CoeffTimeline::PerLevel(v) = self {
            if v.len() != grid.levels() {
                return Err(SolverError::InvalidInput(format!(
                    "per-level coefficients: {} sets for {} levels",
                    v.len(),
                    grid.levels()
                )));
            }
        }
        Ok(())
    }
}

/// Volume source by time level.
pub enum SourceSpec<'a> {
    None,
    /// Precomputed source levels.
    Levels(&'a SpaceTimeField),
    /// Closure filling the source at a given level (used by manufactured
    /// solutions and the perturbation cascade).
    Func(&'a dyn Fn(usize, &mut [f64])),
}

impl SourceSpec<'_> {
    fn fill(&self, level: usize, buf: &mut [f64]) -> bool {
        match self {
            SourceSpec::None => false,
            SourceSpec::Levels(f) => {
                buf.copy_from_slice(f.level(level));
                true
            }
            SourceSpec::Func(f) => {
                f(level, buf);
                true
            }
        }
    }
}

/// Newton settings for the quadratic step and the stationary solve.
#[derive(Debug, Clone, Copy)]
pub struct NewtonParams {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            tolerance: 1e-12,
            max_iterations: 50,
            max_halvings: 8,
        }
    }
}

fn factor_implicit(
    grid: &Grid,
    coeffs: &OperatorCoeffs,
    scale: f64,
    context: &str,
) -> Result<BandLu, SolverError> {
    let mat = operator::assemble(grid, coeffs, 1.0, -scale);
    mat.factor().map_err(|e| SolverError::NonConvergence {
        context: format!("{context}: implicit matrix factorization failed ({e})"),
        iterations: 0,
        residual: f64::NAN,
        tolerance: 0.0,
    })
}

struct March<'a> {
    grid: &'a Grid,
    timeline: &'a CoeffTimeline,
    theta: f64,
    boundary: &'a BoundaryData,
    source: SourceSpec<'a>,
}

impl March<'_> {
    /// One theta step from `known` (at `known_level`) to the unknown level.
    /// `sign` is +1 marching forward in t and -1 marching backward; the
    /// backward equation `-dy/dt = L y + s` becomes forward in `T - t`, so
    /// both cases share this body with the roles of the levels swapped.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        known: &[f64],
        known_level: usize,
        unknown_level: usize,
        lu: &BandLu,
        src_known: Option<&[f64]>,
        src_unknown: Option<&[f64]>,
        out: &mut [f64],
        scratch: &mut [f64],
    ) {
        let grid = self.grid;
        let dt = grid.dt();
        let theta = self.theta;
        // Explicit side: y + (1-theta) dt (L y + s) at the known level,
        // plus theta dt s at the unknown level.
        out.copy_from_slice(known);
        if theta < 1.0 {
            operator::apply(grid, self.timeline.at(known_level), known, scratch);
            for i in 0..out.len() {
                out[i] += (1.0 - theta) * dt * scratch[i];
            }
            if let Some(s) = src_known {
                for (i, o) in out.iter_mut().enumerate() {
                    if !grid.is_boundary(i) {
                        *o += (1.0 - theta) * dt * s[i];
                    }
                }
            }
        }
        if let Some(s) = src_unknown {
            for (i, o) in out.iter_mut().enumerate() {
                if !grid.is_boundary(i) {
                    *o += theta * dt * s[i];
                }
            }
        }
        // Dirichlet rows carry the datum at the unknown level.
        let datum = self.boundary.level(unknown_level);
        for (pos, &node) in grid.sigma_nodes().iter().enumerate() {
            out[node] = datum[pos];
        }
        lu.solve_in_place(out);
    }

    fn run(&self, endpoint: &ScalarField, forward: bool) -> Result<SpaceTimeField, SolverError> {
        let grid = self.grid;
        self.timeline.check(grid)?;
        let n = grid.n_nodes();
        let dt = grid.dt();
        let theta = self.theta;
        let mut field = SpaceTimeField::zeros(endpoint.grid().clone());
        let endpoint_level = if forward { 0 } else { grid.n_time() };
        field.set_level(endpoint_level, endpoint.values());

        let static_lu = if self.timeline.is_static() {
            Some(factor_implicit(
                grid,
                self.timeline.at(0),
                theta * dt,
                "theta step",
            )?)
        } else {
            None
        };

        let mut scratch = vec![0.0; n];
        let mut out = vec![0.0; n];
        let mut src_a = vec![0.0; n];
        let mut src_b = vec![0.0; n];

        let steps: Vec<(usize, usize)> = if forward {
            (0..grid.n_time()).map(|k| (k, k + 1)).collect()
        } else {
            (0..grid.n_time()).rev().map(|k| (k + 1, k)).collect()
        };
        for (known_level, unknown_level) in steps {
            let lu_store;
            let lu = match &static_lu {
                Some(lu) => lu,
                None => {
                    lu_store = factor_implicit(
                        grid,
                        self.timeline.at(unknown_level),
                        theta * dt,
                        "theta step",
                    )?;
                    &lu_store
                }
            };
            let has_known = theta < 1.0 && self.source.fill(known_level, &mut src_a);
            let has_unknown = self.source.fill(unknown_level, &mut src_b);
            self.step(
                field.level(known_level),
                known_level,
                unknown_level,
                lu,
                has_known.then_some(src_a.as_slice()),
                has_unknown.then_some(src_b.as_slice()),
                &mut out,
                &mut scratch,
            );
            field.set_level(unknown_level, &out);
        }
        Ok(field)
    }
}

/// March `dy/dt = L y + s` from the initial level to the horizon.
pub fn march_forward(
    grid: &Grid,
    timeline: &CoeffTimeline,
    theta: f64,
    initial: &ScalarField,
    boundary: &BoundaryData,
    source: SourceSpec,
) -> Result<SpaceTimeField, SolverError> {
    March {
        grid,
        timeline,
        theta,
        boundary,
        source,
    }
    .run(initial, true)
}

/// March `-dy/dt = L y + s` from the terminal level down to zero.
pub fn march_backward(
    grid: &Grid,
    timeline: &CoeffTimeline,
    theta: f64,
    terminal: &ScalarField,
    boundary: &BoundaryData,
    source: SourceSpec,
) -> Result<SpaceTimeField, SolverError> {
    March {
        grid,
        timeline,
        theta,
        boundary,
        source,
    }
    .run(terminal, false)
}

/// Interior residual of the quadratic spatial operator
/// `R(v) = Delta v - grad(v)^T A grad(v) + s`; boundary entries are zero.
fn quadratic_residual(
    grid: &Grid,
    metric: &MetricField,
    v: &[f64],
    source: Option<&[f64]>,
    grad: &mut [Vec<f64>],
    out: &mut [f64],
) {
    crate::fields::ops::gradient_slices(grid, v, grad);
    crate::fields::ops::laplacian_slice(grid, v, out);
    for node in 0..grid.n_nodes() {
        if grid.is_boundary(node) {
            out[node] = 0.0;
            continue;
        }
        let g = [grad[0][node], if grid.dim() == 2 { grad[1][node] } else { 0.0 }];
        out[node] -= metric.quadratic_at(node, g, g);
        if let Some(s) = source {
            out[node] += s[node];
        }
    }
}

/// One damped-Newton solve of the implicit quadratic step
/// `G(v) = v - rhs - dt theta R(v) = 0` with Dirichlet rows `v - datum`.
#[allow(clippy::too_many_arguments)]
fn newton_quadratic_step(
    grid: &Grid,
    metric: &MetricField,
    rhs: &[f64],
    datum: &[f64],
    source: Option<&[f64]>,
    dt_theta: f64,
    params: &NewtonParams,
    v: &mut Vec<f64>,
    context: &str,
) -> Result<(), SolverError> {
    let n = grid.n_nodes();
    let mut grad = vec![vec![0.0; n]; grid.dim()];
    let mut r = vec![0.0; n];
    let mut g_vec = vec![0.0; n];
    let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let eval_g = |v: &[f64], grad: &mut [Vec<f64>], r: &mut [f64], g: &mut [f64]| -> f64 {
        quadratic_residual(grid, metric, v, source, grad, r);
        let mut sup = 0.0f64;
        for node in 0..n {
            g[node] = if grid.is_boundary(node) {
                let pos = grid.sigma_pos(node).expect("boundary node");
                v[node] - datum[pos]
            } else {
                v[node] - rhs[node] - dt_theta * r[node]
            };
            sup = sup.max(g[node].abs());
        }
        sup
    };

    let mut g_norm = eval_g(v, &mut grad, &mut r, &mut g_vec);
    for iteration in 0..params.max_iterations {
        if g_norm <= params.tolerance * scale {
            return Ok(());
        }
        // J = I - dt theta (Delta - 2 (A grad v) . grad); the drift uses the
        // current iterate's gradient, already available in `grad`.
        let drift = crate::fields::VectorField::from_indexed_fn(
            metric.grid().clone(),
            |node| {
                let g = [
                    grad[0][node],
                    if grid.dim() == 2 { grad[1][node] } else { 0.0 },
                ];
                let ag = metric.apply_at(node, g);
                [-2.0 * ag[0], -2.0 * ag[1]]
            },
        );
        let coeffs = OperatorCoeffs::advective(drift);
        let jac: BandMatrix = operator::assemble(grid, &coeffs, 1.0, -dt_theta);
        let lu = jac
            .factor()
            .map_err(|e| SolverError::IndefiniteJacobian { iteration, source: e })?;
        let delta = lu.solve(&g_vec);
        // Backtracking on the residual norm.
        let mut t = 1.0;
        let mut accepted = false;
        let mut candidate = vec![0.0; n];
        for _ in 0..=params.max_halvings {
            for i in 0..n {
                candidate[i] = v[i] - t * delta[i];
            }
            let trial = eval_g(&candidate, &mut grad, &mut r, &mut g_vec);
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
                context: format!("{context}: line search stalled"),
                iterations: iteration + 1,
                residual: g_norm,
                tolerance: params.tolerance * scale,
            });
        }
    }
    if g_norm <= params.tolerance * scale {
        Ok(())
    } else {
        Err(SolverError::NonConvergence {
            context: context.to_string(),
            iterations: params.max_iterations,
            residual: g_norm,
            tolerance: params.tolerance * scale,
        })
    }
}

/// Backward march of the quadratic equation
///
/// ```text
/// -dv/dt = Delta v - grad(v)^T A grad(v) + s(x, t)
/// ```
///
/// with terminal data, Dirichlet boundary values, and a per-level source
/// (typically the running cost evaluated on a frozen density).  Each step is
/// solved by damped Newton; the predictor is the previous level, so at a
/// stationary point zero iterations run and the level is copied bit-for-bit.
pub fn march_quadratic_backward(
    grid: &Grid,
    metric: &MetricField,
    theta: f64,
    terminal: &ScalarField,
    boundary: &BoundaryData,
    source: SourceSpec,
) -> Result<SpaceTimeField, SolverError> {
    march_quadratic_backward_with(grid, metric, theta, terminal, boundary, source, &NewtonParams::default())
}

pub fn march_quadratic_backward_with(
    grid: &Grid,
    metric: &MetricField,
    theta: f64,
    terminal: &ScalarField,
    boundary: &BoundaryData,
    source: SourceSpec,
    params: &NewtonParams,
) -> Result<SpaceTimeField, SolverError> {
    let n = grid.n_nodes();
    let dt = grid.dt();
    let mut field = SpaceTimeField::zeros(terminal.grid().clone());
    field.set_level(grid.n_time(), terminal.values());

    let mut grad = vec![vec![0.0; n]; grid.dim()];
    let mut r_known = vec![0.0; n];
    let mut src_known = vec![0.0; n];
    let mut src_unknown = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    for unknown_level in (0..grid.n_time()).rev() {
        let known_level = unknown_level + 1;
        let has_src_known = source.fill(known_level, &mut src_known);
        let has_src_unknown = source.fill(unknown_level, &mut src_unknown);
        {
            let known = field.level(known_level);
            rhs.copy_from_slice(known);
            if theta < 1.0 {
                quadratic_residual(
                    grid,
                    metric,
                    known,
                    has_src_known.then_some(src_known.as_slice()),
                    &mut grad,
                    &mut r_known,
                );
                for i in 0..n {
                    rhs[i] += (1.0 - theta) * dt * r_known[i];
                }
            }
        }
        let mut v = field.level(known_level).to_vec();
        newton_quadratic_step(
            grid,
            metric,
            &rhs,
            boundary.level(unknown_level),
            has_src_unknown.then_some(src_unknown.as_slice()),
            theta * dt,
            params,
            &mut v,
            "quadratic backward step",
        )?;
        field.set_level(unknown_level, &v);
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{BoundaryKind, VectorField};
    use std::f64::consts::PI;

    /// Closed-form series for the backward heat problem with zero terminal
    /// data and boundary values `T - t` on both ends of the unit interval:
    /// with s = T - t,  y = s - sum_{k odd} 4/(k pi)^3 (1 - e^{-k^2 pi^2 s})
    /// sin(k pi x).
    fn heat_series(x: f64, s: f64) -> f64 {
        let mut acc = s;
        for k in (1..400).step_by(2) {
            let kpi = k as f64 * PI;
            acc -= 4.0 / (kpi * kpi * kpi) * (1.0 - (-kpi * kpi * s).exp()) * (kpi * x).sin();
        }
        acc
    }

    fn backward_heat_error(n_cells: usize, n_time: usize, theta: f64) -> f64 {
        let grid = Grid::new_1d(0.0, 1.0, n_cells, 0.3, n_time).unwrap();
        let timeline = CoeffTimeline::Static(OperatorCoeffs::diffusion_only());
        let terminal = ScalarField::constant(grid.clone(), 0.0);
        let boundary = BoundaryData::from_fn(grid.clone(), BoundaryKind::Trace, |_, t| {
            grid.t_horizon() - t
        });
        let y = march_backward(&grid, &timeline, theta, &terminal, &boundary, SourceSpec::None)
            .unwrap();
        let mut err = 0.0f64;
        for level in 0..grid.levels() {
            let s = grid.t_horizon() - grid.t(level);
            for node in 0..grid.n_nodes() {
                let exact = heat_series(grid.coords(node)[0], s);
                err = err.max((y.at(node, level) - exact).abs());
            }
        }
        err
    }

    #[test]
    fn backward_march_matches_heat_series() {
        // Trapezoid rule on a fine grid: both h^2 and dt^2 small.
        let err = backward_heat_error(65, 128, 0.5);
        assert!(err < 5e-4, "series mismatch {err}");
    }

    #[test]
    fn implicit_euler_is_first_order_in_time() {
        // Fix a fine spatial grid so the temporal error dominates.
        let e_coarse = backward_heat_error(129, 16, 1.0);
        let e_fine = backward_heat_error(129, 32, 1.0);
        let order = (e_coarse / e_fine).log2();
        assert!(
            (order - 1.0).abs() < 0.35,
            "temporal order {order} (errors {e_coarse:.3e}, {e_fine:.3e})"
        );
    }

    #[test]
    fn forward_march_with_manufactured_source() {
        // y(x, t) = e^{-t} sin(pi x) needs s = dy/dt - L y with drift b:
        // s = (-1 + pi^2) e^{-t} sin(pi x) - b pi e^{-t} cos(pi x).
        let grid = Grid::new_1d(0.0, 1.0, 65, 0.4, 256).unwrap();
        let b = 0.7;
        let drift = VectorField::from_fn(grid.clone(), |_| [b, 0.0]);
        let timeline = CoeffTimeline::Static(OperatorCoeffs::advective(drift));
        let initial = ScalarField::from_fn(grid.clone(), |x| (PI * x[0]).sin());
        let boundary = BoundaryData::zeros(grid.clone(), BoundaryKind::Trace);
        let g2 = grid.clone();
        let source = move |level: usize, buf: &mut [f64]| {
            let t = g2.t(level);
            for node in 0..g2.n_nodes() {
                let x = g2.coords(node)[0];
                buf[node] = (-1.0 + PI * PI) * (-t).exp() * (PI * x).sin()
                    - b * PI * (-t).exp() * (PI * x).cos();
            }
        };
        let y = march_forward(
            &grid,
            &timeline,
            1.0,
            &initial,
            &boundary,
            SourceSpec::Func(&source),
        )
        .unwrap();
        let exact = SpaceTimeField::from_fn(grid.clone(), |x, t| (-t).exp() * (PI * x[0]).sin());
        let err = y.sup_distance(&exact);
        assert!(err < 3e-3, "manufactured solution error {err}");
    }

    #[test]
    fn per_level_coefficients_are_honored() {
        // Pure decay dy/dt = c(t) y with a piecewise-constant-in-time
        // potential; compare against the exact product of the step factors.
        let grid = Grid::new_1d(0.0, 1.0, 9, 1.0, 8).unwrap();
        let coeffs: Vec<OperatorCoeffs> = (0..grid.levels())
            .map(|level| {
                let c = -(level as f64) * 0.1;
                let mut oc = OperatorCoeffs::diffusion_only();
                oc.potential = Some(ScalarField::constant(grid.clone(), c));
                oc
            })
            .collect();
        let timeline = CoeffTimeline::PerLevel(coeffs);
        let initial = ScalarField::constant(grid.clone(), 1.0);
        // Boundary follows the same recursion as the interior so the field
        // stays spatially constant and the Laplacian contributes nothing.
        let dt = grid.dt();
        let mut factors = vec![1.0f64];
        for level in 1..grid.levels() {
            let c = -(level as f64) * 0.1;
            let prev = factors[level - 1];
            factors.push(prev / (1.0 - dt * c));
        }
        let f2 = factors.clone();
        let boundary = BoundaryData::from_fn(grid.clone(), BoundaryKind::Trace, move |_, t| {
            let level = (t / dt).round() as usize;
            f2[level]
        });
        let y = march_forward(&grid, &timeline, 1.0, &initial, &boundary, SourceSpec::None)
            .unwrap();
        for level in 0..grid.levels() {
            for node in 0..grid.n_nodes() {
                assert!(
                    (y.at(node, level) - factors[level]).abs() < 1e-12,
                    "level {level} node {node}"
                );
            }
        }
    }

    #[test]
    fn quadratic_march_reduces_to_linear_when_metric_is_tiny() {
        // With kappa ~ 0 the quadratic term is negligible and the Newton
        // march must agree with the linear heat march.
        let grid = Grid::new_1d(0.0, 1.0, 33, 0.2, 32).unwrap();
        let metric = MetricField::isotropic(grid.clone(), vec![1e-14; grid.n_nodes()]).unwrap();
        let terminal = ScalarField::from_fn(grid.clone(), |x| x[0] * (1.0 - x[0]));
        let boundary = BoundaryData::zeros(grid.clone(), BoundaryKind::Trace);
        let quad = march_quadratic_backward(
            &grid,
            &metric,
            1.0,
            &terminal,
            &boundary,
            SourceSpec::None,
        )
        .unwrap();
        let timeline = CoeffTimeline::Static(OperatorCoeffs::diffusion_only());
        let lin = march_backward(&grid, &timeline, 1.0, &terminal, &boundary, SourceSpec::None)
            .unwrap();
        assert!(quad.sup_distance(&lin) < 1e-10);
    }

    #[test]
    fn quadratic_march_second_order_in_space() {
        // Manufactured: v = e^{t - T} sin(pi x), A = I.  Source chosen so the
        // continuum equation holds: s = -dv/dt - Delta v + (v')^2.
        let run = |n_cells: usize| -> f64 {
            let t_h = 0.25;
            let grid = Grid::new_1d(0.0, 1.0, n_cells, t_h, 512).unwrap();
            let metric =
                MetricField::isotropic(grid.clone(), vec![1.0; grid.n_nodes()]).unwrap();
            let exact = |x: f64, t: f64| (t - t_h).exp() * (PI * x).sin();
            let terminal = ScalarField::from_fn(grid.clone(), |x| exact(x[0], t_h));
            let boundary =
                BoundaryData::from_fn(grid.clone(), BoundaryKind::Trace, |x, t| exact(x[0], t));
            let g2 = grid.clone();
            let source = move |level: usize, buf: &mut [f64]| {
                let t = g2.t(level);
                for node in 0..g2.n_nodes() {
                    let x = g2.coords(node)[0];
                    let v = (t - t_h).exp() * (PI * x).sin();
                    let vx = (t - t_h).exp() * PI * (PI * x).cos();
                    // -dv/dt + grad^T A grad v - Delta v ... rearranged for
                    // -dv/dt = Delta v - (vx)^2 + s  =>  s = -v - (-pi^2 v) + vx^2
                    buf[node] = -v + PI * PI * v + vx * vx;
                }
            };
            let y = march_quadratic_backward(
                &grid,
                &metric,
                0.5,
                &terminal,
                &boundary,
                SourceSpec::Func(&source),
            )
            .unwrap();
            let exact_f = SpaceTimeField::from_fn(grid.clone(), |x, t| exact(x[0], t));
            y.sup_distance(&exact_f)
        };
        let e_coarse = run(17);
        let e_fine = run(33);
        let order = (e_coarse / e_fine).log2();
        assert!(
            (order - 2.0).abs() < 0.4,
            "spatial order {order} (errors {e_coarse:.3e}, {e_fine:.3e})"
        );
    }
}
