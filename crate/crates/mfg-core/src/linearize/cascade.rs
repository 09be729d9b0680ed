//! The cascade of perturbation systems.
//!
//! Perturbing the boundary data along directions `(g_i, h_i)` with sizes
//! `eps_i` and collecting the multilinear coefficient of `prod_{i in S}
//! eps_i` yields, for every nonempty subset `S`, a linear pair driven only
//! by strictly smaller subsets:
//!
//! ```text
//! -dv/dt - Delta v + q . grad v
//!     = sum_{partitions pi of S, |pi| >= 2} F_(|pi|) prod_{B in pi} m^B
//!     - sum_{unordered splits {S1, S2}} 2 grad(u^S1)^T A grad(u^S2)
//!
//!  dm/dt - Delta m - div(m q) - div(m0 . 2 A grad v)
//!     = sum_{ordered splits (S1, S2)} div(m^S1 . 2 A grad u^S2)
//! ```
//!
//! with `q = 2 A grad u0`.  Singletons carry the boundary data of their
//! direction; larger subsets are homogeneous.  The single-block partition is
//! absent because the first cost coefficient vanishes at the reference
//! density — the structural fact the whole hierarchy rests on.
//!
//! Every discrete ingredient (gradients, the conservative divergence, the
//! cost coefficients) matches the corresponding piece of the nonlinear
//! solver, so divided differences of full solves converge to these fields
//! at the rate the calculus predicts.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::partitions::{
    ordered_splittings, popcount, proper_partitions, subsets_by_size, unordered_splittings, Mask,
};
use crate::error::SolverError;
use crate::fields::{ops, BoundaryData, BoundaryKind, Grid, MetricField, ScalarField, SpaceTimeField};
use crate::forward::cost::factorial;
use crate::forward::{
    march_backward, march_forward, CoeffTimeline, OperatorCoeffs, PerturbationSpec, RunningCost,
    SourceSpec, StationaryState,
};

/// Value/density pair of one perturbation order.
#[derive(Debug, Clone)]
pub struct OrderPair {
    pub value: SpaceTimeField,
    pub density: SpaceTimeField,
}

/// All solved orders, keyed by direction subset.
#[derive(Debug, Clone)]
pub struct CascadeSolution {
    pub orders: BTreeMap<Mask, OrderPair>,
}

impl CascadeSolution {
    pub fn pair(&self, mask: Mask) -> Option<&OrderPair> {
        self.orders.get(&mask)
    }

    /// First-order pair of direction `i`.
    pub fn first(&self, i: usize) -> &OrderPair {
        &self.orders[&(1 << i)]
    }
}

/// Largest direction count the cascade accepts; partition counts grow as
/// Bell numbers, and five directions (52 partitions) already cover every
/// recovery the crate performs.
pub const MAX_DIRECTIONS: usize = 5;

/// `z_a = weight * 2 (A grad)_a` at every node.
fn weighted_metric_flux(
    metric: &MetricField,
    weight: &[f64],
    grad: &[Vec<f64>],
    z: &mut [Vec<f64>],
) {
    let dim = grad.len();
    for node in 0..weight.len() {
        let g = [grad[0][node], if dim == 2 { grad[1][node] } else { 0.0 }];
        let ag = metric.apply_at(node, g);
        for a in 0..dim {
            z[a][node] += 2.0 * weight[node] * ag[a];
        }
    }
}

/// Accumulate the central divergence of `z` into `out` at interior nodes —
/// the same rows the conservative drift occupies in the implicit matrices.
fn add_central_divergence(grid: &Grid, z: &[Vec<f64>], out: &mut [f64]) {
    for axis in 0..grid.dim() {
        let h = grid.h()[axis];
        let stride = if grid.dim() == 1 || axis == 1 {
            1
        } else {
            grid.n_cells()[1]
        };
        let za = &z[axis];
        for node in 0..grid.n_nodes() {
            if grid.is_boundary(node) {
                continue;
            }
            out[node] += (za[node + stride] - za[node - stride]) / (2.0 * h);
        }
    }
}

/// `sum 2 grad(a)^T A grad(b)` accumulated into `out` at interior nodes.
fn add_cross_energy(
    grid: &Grid,
    metric: &MetricField,
    grad_a: &[Vec<f64>],
    grad_b: &[Vec<f64>],
    sign: f64,
    out: &mut [f64],
) {
    let dim = grid.dim();
    for node in 0..grid.n_nodes() {
        if grid.is_boundary(node) {
            continue;
        }
        let ga = [
            grad_a[0][node],
            if dim == 2 { grad_a[1][node] } else { 0.0 },
        ];
        let gb = [
            grad_b[0][node],
            if dim == 2 { grad_b[1][node] } else { 0.0 },
        ];
        out[node] += sign * 2.0 * metric.quadratic_at(node, ga, gb);
    }
}

/// `div(2 weight A grad(value))` per level at interior nodes — the coupling
/// through which a value perturbation drives the density equation, with the
/// same divided differences the implicit matrices use.
pub(crate) fn density_coupling_source(
    grid: &Arc<Grid>,
    metric: &MetricField,
    weight: &ScalarField,
    value: &SpaceTimeField,
) -> SpaceTimeField {
    let n = grid.n_nodes();
    let dim = grid.dim();
    let mut out = SpaceTimeField::zeros(grid.clone());
    let mut grad = vec![vec![0.0; n]; dim];
    let mut z = vec![vec![0.0; n]; dim];
    for level in 0..grid.levels() {
        for za in z.iter_mut() {
            za.iter_mut().for_each(|v| *v = 0.0);
        }
        ops::gradient_slices(grid, value.level(level), &mut grad);
        weighted_metric_flux(metric, weight.values(), &grad, &mut z);
        add_central_divergence(grid, &z, out.level_mut(level));
    }
    out
}

fn value_source(
    grid: &Arc<Grid>,
    metric: &MetricField,
    cost: &RunningCost,
    solved: &BTreeMap<Mask, OrderPair>,
    subset: Mask,
) -> Option<SpaceTimeField> {
    if popcount(subset) < 2 {
        return None;
    }
    let n = grid.n_nodes();
    let dim = grid.dim();
    let mut out = SpaceTimeField::zeros(grid.clone());
    let mut grad_a = vec![vec![0.0; n]; dim];
    let mut grad_b = vec![vec![0.0; n]; dim];
    let cost_partitions: Vec<(Vec<Mask>, &ScalarField)> = proper_partitions(subset)
        .into_iter()
        .filter_map(|p| cost.coefficient(p.len()).map(|f| (p, f)))
        .collect();
    let splits = unordered_splittings(subset);
    for level in 0..grid.levels() {
        let out_level = out.level_mut(level);
        for (blocks, coefficient) in &cost_partitions {
            for node in 0..n {
                if grid.is_boundary(node) {
                    continue;
                }
                let mut product = coefficient.at(node);
                for &b in blocks {
                    product *= solved[&b].density.at(node, level);
                }
                out_level[node] += product;
            }
        }
        for &(s1, s2) in &splits {
            ops::gradient_slices(grid, solved[&s1].value.level(level), &mut grad_a);
            ops::gradient_slices(grid, solved[&s2].value.level(level), &mut grad_b);
            add_cross_energy(grid, metric, &grad_a, &grad_b, -1.0, out_level);
        }
    }
    Some(out)
}

fn density_source(
    grid: &Arc<Grid>,
    metric: &MetricField,
    m0: &ScalarField,
    solved: &BTreeMap<Mask, OrderPair>,
    subset: Mask,
    value: &SpaceTimeField,
) -> SpaceTimeField {
    let n = grid.n_nodes();
    let dim = grid.dim();
    let mut out = SpaceTimeField::zeros(grid.clone());
    let mut grad = vec![vec![0.0; n]; dim];
    let mut z = vec![vec![0.0; n]; dim];
    let splits = ordered_splittings(subset);
    for level in 0..grid.levels() {
        for za in z.iter_mut() {
            za.iter_mut().for_each(|v| *v = 0.0);
        }
        ops::gradient_slices(grid, value.level(level), &mut grad);
        weighted_metric_flux(metric, m0.values(), &grad, &mut z);
        for &(s_m, s_u) in &splits {
            ops::gradient_slices(grid, solved[&s_u].value.level(level), &mut grad);
            weighted_metric_flux(metric, solved[&s_m].density.level(level), &grad, &mut z);
        }
        add_central_divergence(grid, &z, out.level_mut(level));
    }
    out
}

/// Solve all `2^n - 1` perturbation systems for the given directions, in
/// dependency order.
pub fn solve_cascade(
    state: &StationaryState,
    metric: &MetricField,
    cost: &RunningCost,
    directions: &[PerturbationSpec],
    theta: f64,
) -> Result<CascadeSolution, SolverError> {
    if directions.is_empty() || directions.len() > MAX_DIRECTIONS {
        return Err(SolverError::InvalidInput(format!(
            "cascade needs 1..={MAX_DIRECTIONS} directions, got {}",
            directions.len()
        )));
    }
    let grid = state.value.grid().clone();
    let q = state.drift.clone();
    let mut minus_q = q.clone();
    minus_q.scale(-1.0);
    // -dv/dt = Delta v - q . grad v + src   (backward, advective -q)
    let value_timeline = CoeffTimeline::Static(OperatorCoeffs::advective(minus_q));
    //  dm/dt = Delta m + div(m q) + src     (forward, conservative q)
    let density_timeline = CoeffTimeline::Static(OperatorCoeffs::conservative(q));
    let zero = ScalarField::constant(grid.clone(), 0.0);
    let zero_boundary = BoundaryData::zeros(grid.clone(), BoundaryKind::Trace);

    let mut orders: BTreeMap<Mask, OrderPair> = BTreeMap::new();
    for subset in subsets_by_size(directions.len()) {
        let singleton = popcount(subset) == 1;
        let direction = subset.trailing_zeros() as usize;
        let v_source = value_source(&grid, metric, cost, &orders, subset);
        let v_boundary = if singleton {
            &directions[direction].value_data
        } else {
            &zero_boundary
        };
        let value = march_backward(
            &grid,
            &value_timeline,
            theta,
            &zero,
            v_boundary,
            match &v_source {
                Some(f) => SourceSpec::Levels(f),
                None => SourceSpec::None,
            },
        )?;
        let m_source = density_source(&grid, metric, &state.density, &orders, subset, &value);
        let m_boundary = if singleton {
            &directions[direction].density_data
        } else {
            &zero_boundary
        };
        let density = march_forward(
            &grid,
            &density_timeline,
            theta,
            &zero,
            m_boundary,
            SourceSpec::Levels(&m_source),
        )?;
        orders.insert(subset, OrderPair { value, density });
    }
    Ok(CascadeSolution { orders })
}

/// First-order pair for a single direction.
pub fn solve_first_order(
    state: &StationaryState,
    metric: &MetricField,
    direction: &PerturbationSpec,
    theta: f64,
) -> Result<OrderPair, SolverError> {
    let cost = RunningCost::zero(state.density.clone());
    let mut solution = solve_cascade(state, metric, &cost, std::slice::from_ref(direction), theta)?;
    Ok(solution.orders.remove(&1).expect("singleton order"))
}

/// Both first-order pairs and the mixed second-order pair for two
/// directions.
pub struct SecondOrder {
    pub first_a: OrderPair,
    pub first_b: OrderPair,
    pub mixed: OrderPair,
}

pub fn solve_second_order(
    state: &StationaryState,
    metric: &MetricField,
    cost: &RunningCost,
    direction_a: &PerturbationSpec,
    direction_b: &PerturbationSpec,
    theta: f64,
) -> Result<SecondOrder, SolverError> {
    let mut solution = solve_cascade(
        state,
        metric,
        cost,
        &[direction_a.clone(), direction_b.clone()],
        theta,
    )?;
    Ok(SecondOrder {
        first_a: solution.orders.remove(&0b01).expect("first direction"),
        first_b: solution.orders.remove(&0b10).expect("second direction"),
        mixed: solution.orders.remove(&0b11).expect("mixed order"),
    })
}

/// The multilinear coefficient of the Taylor expansion along a single
/// repeated direction: `u(eps) = u0 + eps u_1 + eps^2 u_2 + ...` where
/// `u_k = u^{(1..k)} / k!` for `k` copies of the direction.
pub fn taylor_pair(mixed: &OrderPair, copies: usize) -> OrderPair {
    let scale = 1.0 / factorial(copies);
    let mut value = mixed.value.clone();
    let mut density = mixed.density.clone();
    value.scale(scale);
    density.scale(scale);
    OrderPair { value, density }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Envelope, PerturbationConfig, Profile};
    use crate::forward::{
        generate_measurements, measure_fields, solve_stationary, FixedPointParams, NewtonParams,
    };
    use crate::reference::{backward_heat_series, ConformalFamily1d};

    fn trivial_state(grid: &Arc<Grid>) -> (MetricField, StationaryState) {
        // u0 = 0, m0 = 1, identity metric: drift vanishes and the
        // first-order value equation reduces to the backward heat equation.
        let metric = MetricField::isotropic(grid.clone(), vec![1.0; grid.n_nodes()]).unwrap();
        let state = solve_stationary(
            grid,
            &metric,
            &vec![0.0; grid.sigma_len()],
            &vec![1.0; grid.sigma_len()],
            &NewtonParams::default(),
        )
        .unwrap();
        (metric, state)
    }

    #[test]
    fn first_order_value_matches_heat_series() {
        let grid = Grid::new_1d(0.0, 1.0, 65, 0.3, 128).unwrap();
        let (metric, state) = trivial_state(&grid);
        let direction = PerturbationSpec::from_config(
            &grid,
            &PerturbationConfig {
                label: "heat".into(),
                u_space: Profile::Constant { value: 1.0 },
                u_time: Envelope::RampDown { power: 1 },
                m_space: Profile::Constant { value: 0.0 },
                m_time: Envelope::Constant { value: 0.0 },
            },
        )
        .unwrap();
        let pair = solve_first_order(&state, &metric, &direction, 0.5).unwrap();
        // Boundary datum is (T - t)/T, so the series solution scales by 1/T.
        let t_h = grid.t_horizon();
        let mut err = 0.0f64;
        for level in 0..grid.levels() {
            let s = t_h - grid.t(level);
            for node in 0..grid.n_nodes() {
                let exact = backward_heat_series(grid.coords(node)[0], s) / t_h;
                err = err.max((pair.value.at(node, level) - exact).abs());
            }
        }
        assert!(err < 5e-3, "series mismatch {err}");
    }

    #[test]
    fn doubling_the_direction_doubles_the_solution_exactly() {
        let grid = Grid::new_1d(0.0, 1.0, 33, 0.4, 32).unwrap();
        let (metric, state) = trivial_state(&grid);
        let base = PerturbationSpec::from_config(
            &grid,
            &PerturbationConfig {
                label: "one".into(),
                u_space: Profile::SineProduct {
                    mean: 0.0,
                    amplitude: 1.0,
                    frequency: [1, 0],
                    phase: [0.5, 0.0],
                },
                u_time: Envelope::RampDown { power: 2 },
                m_space: Profile::Constant { value: 1.0 },
                m_time: Envelope::RampUp { power: 2 },
            },
        )
        .unwrap();
        let mut doubled = base.clone();
        doubled.value_data.scale(2.0);
        doubled.density_data.scale(2.0);
        let p1 = solve_first_order(&state, &metric, &base, 1.0).unwrap();
        let p2 = solve_first_order(&state, &metric, &doubled, 1.0).unwrap();
        // Scaling by a power of two is exact in binary floating point, and
        // the solve is linear, so the fields must match bit for bit.
        for (a, b) in p1.value.values().iter().zip(p2.value.values()) {
            assert_eq!(2.0 * *a, *b);
        }
        for (a, b) in p1.density.values().iter().zip(p2.density.values()) {
            assert_eq!(2.0 * *a, *b);
        }
    }

    #[test]
    fn zero_partner_direction_kills_the_mixed_order() {
        let grid = Grid::new_1d(0.0, 1.0, 17, 0.4, 16).unwrap();
        let (metric, state) = trivial_state(&grid);
        let live = PerturbationSpec::from_config(
            &grid,
            &PerturbationConfig {
                label: "live".into(),
                u_space: Profile::Constant { value: 1.0 },
                u_time: Envelope::RampDown { power: 2 },
                m_space: Profile::Constant { value: 1.0 },
                m_time: Envelope::RampUp { power: 2 },
            },
        )
        .unwrap();
        let dead = PerturbationSpec::from_config(
            &grid,
            &PerturbationConfig {
                label: "dead".into(),
                u_space: Profile::Constant { value: 0.0 },
                u_time: Envelope::Constant { value: 0.0 },
                m_space: Profile::Constant { value: 0.0 },
                m_time: Envelope::Constant { value: 0.0 },
            },
        )
        .unwrap();
        let cost = RunningCost::new(
            state.density.clone(),
            vec![(2, ScalarField::constant(grid.clone(), 5.0))],
        )
        .unwrap();
        let orders = solve_second_order(&state, &metric, &cost, &live, &dead, 1.0).unwrap();
        assert_eq!(orders.first_b.value.sup_norm(), 0.0);
        assert_eq!(orders.mixed.value.sup_norm(), 0.0);
        assert_eq!(orders.mixed.density.sup_norm(), 0.0);
    }

    #[test]
    fn mixed_second_order_matches_divided_differences() {
        // Full nonlinear solves against the cascade: the second central
        // divided difference of boundary records along one direction must
        // approach the Taylor pair records at rate O(eps).
        let fam = ConformalFamily1d::standard();
        let grid = Grid::new_1d(0.0, 1.0, 33, 0.4, 32).unwrap();
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
        let cost = RunningCost::new(
            state.density.clone(),
            vec![(2, ScalarField::from_fn(grid.clone(), |x| 1.0 + x[0]))],
        )
        .unwrap();
        let direction = PerturbationSpec::from_config(
            &grid,
            &PerturbationConfig {
                label: "probe".into(),
                u_space: Profile::Constant { value: 1.0 },
                u_time: Envelope::RampDown { power: 2 },
                m_space: Profile::Constant { value: 1.0 },
                m_time: Envelope::RampUp { power: 2 },
            },
        )
        .unwrap();
        let orders =
            solve_second_order(&state, &metric, &cost, &direction, &direction, 1.0).unwrap();
        let taylor2 = taylor_pair(&orders.mixed, 2);

        let fp = FixedPointParams {
            tolerance: 1e-12,
            ..Default::default()
        };
        let run_dd = |eps: f64| -> f64 {
            let ladder = generate_measurements(
                &state,
                &metric,
                &cost,
                std::slice::from_ref(&direction),
                &[vec![eps], vec![0.5 * eps]],
                &fp,
            )
            .unwrap();
            let d_full = &ladder.records[0].1;
            let d_half = &ladder.records[1].1;
            // D(e) - 2 D(e/2) + D(0) = (e^2/2) L2 + O(e^3); L2 records are
            // the Taylor-pair records.
            let mut dd = d_full.difference(&ladder.baseline);
            let mut half = d_half.difference(&ladder.baseline);
            half.scale(-2.0);
            dd.axpy(1.0, &half);
            dd.scale(2.0 / (eps * eps));
            let predicted = measure_fields(&taylor2.value, &taylor2.density);
            let mut err = dd.value_flux.sup_distance(&predicted.value_flux);
            err = err.max(dd.density_flux.sup_distance(&predicted.density_flux));
            err
        };
        let scale = {
            let predicted = measure_fields(&taylor2.value, &taylor2.density);
            predicted
                .value_flux
                .sup_norm()
                .max(predicted.density_flux.sup_norm())
        };
        let e1 = run_dd(2e-2);
        let e2 = run_dd(1e-2);
        assert!(
            e2 <= 0.1 * scale,
            "second-order mismatch {e2} vs scale {scale}"
        );
        assert!(
            e1 / e2 > 1.5,
            "divided-difference error should shrink ~linearly: {e1} -> {e2}"
        );
    }
}
