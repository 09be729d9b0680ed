//! Running-cost coefficient recovery, one Taylor order at a time.
//!
//! At order `k` of the perturbation cascade the coefficient `F_k` enters
//! exactly once, multiplying the excitation built from the first-order
//! density:
//!
//! ```text
//! source of v_k  =  F_k (m_1)^k / k!  +  (terms in F_2 .. F_{k-1}),
//! ```
//!
//! so after subtracting a cascade solve that carries only the lower
//! coefficients, the order-`k` flux records depend *linearly* on `F_k`.
//! The recovery assembles that linear map column by column (one value march
//! and one density march per interior node), whitens the rows by the known
//! noise scales, and solves a Tikhonov system whose weight is either fixed
//! or chosen by discrepancy: the largest weight whose whitened misfit stays
//! within a factor of the noise level.

use nalgebra::{DMatrix, DVector};

use super::basis::{surface_quadrature_sqrt, InteriorBasis};
use super::data::NoiseScales;
use crate::error::InverseError;
use crate::fields::{
    ops, BoundaryData, BoundaryKind, MetricField, ScalarField, SpaceTimeField,
};
use crate::forward::cost::factorial;
use crate::forward::{
    march_backward, march_forward, measure_fields, CauchyDataset, CoeffTimeline, OperatorCoeffs,
    PerturbationSpec, RunningCost, SourceSpec, StationaryState,
};
use crate::linalg::regularized_least_squares;
use crate::linearize::cascade::density_coupling_source;
use crate::linearize::{solve_cascade, taylor_pair};

/// Controls for one coefficient recovery.
#[derive(Debug, Clone)]
pub struct CoefficientSettings {
    /// Tikhonov weight used when no noise information is available.
    pub fallback_lambda: f64,
    /// Candidate weights for the discrepancy rule, tried in descending
    /// order.
    pub lambda_ladder: Vec<f64>,
    /// Accept the largest weight whose whitened misfit is below this factor
    /// times the noise level.
    pub morozov_factor: f64,
    /// Use the discrepancy rule when noise scales are available; otherwise
    /// always solve at `fallback_lambda`.
    pub use_discrepancy: bool,
    /// Smallest admissible space-time norm of the excitation `(m_1)^k/k!`.
    pub excitation_floor: f64,
    pub theta: f64,
}

impl Default for CoefficientSettings {
    fn default() -> Self {
        CoefficientSettings {
            fallback_lambda: 1e-10,
            lambda_ladder: (0..13).map(|i| 1e2 * 10f64.powi(-i)).collect(),
            morozov_factor: 1.05,
            use_discrepancy: true,
            excitation_floor: 1e-10,
            theta: 1.0,
        }
    }
}

/// Recovered coefficient with the diagnostics of the linear solve.
#[derive(Debug, Clone)]
pub struct CoefficientRecovery {
    pub coefficient: ScalarField,
    /// Tikhonov weight actually used.
    pub lambda: f64,
    /// Whitened data misfit at that weight.
    pub misfit: f64,
    /// Whitened noise level (zero when no noise scales were supplied).
    pub target: f64,
    /// Space-time norm of the excitation.
    pub excitation: f64,
    pub rcond: f64,
}

fn stack_records(
    value_flux: &BoundaryData,
    density_flux: &BoundaryData,
    w_value: &[f64],
    w_density: &[f64],
) -> DVector<f64> {
    let half = w_value.len();
    let mut out = DVector::zeros(2 * half);
    let grid = value_flux.grid();
    let mut i = 0;
    for level in 0..grid.levels() {
        for v in value_flux.level(level) {
            out[i] = w_value[i] * v;
            i += 1;
        }
    }
    let mut j = 0;
    for level in 0..grid.levels() {
        for v in density_flux.level(level) {
            out[half + j] = w_density[j] * v;
            j += 1;
        }
    }
    out
}

/// Recover `F_k` from order-`k` records of a single repeated direction.
///
/// `state`, `metric` and `lower` are the recovered stationary state, metric
/// and lower-order coefficients; `records` holds the measured order-`k`
/// boundary data (the `k`-th Taylor records of the perturbation family).
#[allow(clippy::too_many_arguments)]
pub fn recover_cost_coefficient(
    state: &StationaryState,
    metric: &MetricField,
    lower: &RunningCost,
    order: usize,
    direction: &PerturbationSpec,
    records: &CauchyDataset,
    noise: &NoiseScales,
    settings: &CoefficientSettings,
) -> Result<CoefficientRecovery, InverseError> {
    if order < 2 {
        return Err(InverseError::InsufficientData(format!(
            "cost coefficients start at order two, asked for {order}"
        )));
    }
    for k in 2..order {
        if lower.coefficient(k).is_none() {
            return Err(InverseError::MissingLowerOrder(format!(
                "order-{order} recovery needs the order-{k} coefficient first"
            )));
        }
    }
    if lower.max_order() >= order {
        return Err(InverseError::InsufficientData(format!(
            "lower cost already carries order {} >= {order}",
            lower.max_order()
        )));
    }
    let grid = state.value.grid().clone();

    // Offset: the order-k records produced by the lower coefficients alone,
    // via a cascade on k identical copies of the direction.
    let copies = vec![direction.clone(); order];
    let cascade = solve_cascade(state, metric, lower, &copies, settings.theta)?;
    let full: crate::linearize::Mask = (1u32 << order) - 1;
    let offset_pair = taylor_pair(
        cascade
            .pair(full)
            .expect("cascade solves every subset of its directions"),
        order,
    );
    let offset = measure_fields(&offset_pair.value, &offset_pair.density);

    // Excitation from the first-order density of the same cascade.
    let m1 = &cascade.first(0).density;
    let scale = 1.0 / factorial(order);
    let mut excitation_field = SpaceTimeField::zeros(grid.clone());
    for level in 0..grid.levels() {
        let src = m1.level(level);
        let dst = excitation_field.level_mut(level);
        for node in 0..grid.n_nodes() {
            dst[node] = scale * src[node].powi(order as i32);
        }
    }
    let excitation = ops::st_l2_norm(&excitation_field);
    if excitation < settings.excitation_floor {
        return Err(InverseError::InsufficientExcitation {
            norm: excitation,
            floor: settings.excitation_floor,
        });
    }

    // Row weights: quadrature times whitening by the per-kind noise scale.
    let quad = surface_quadrature_sqrt(&grid);
    let whiten = |s: f64| if s > 0.0 { 1.0 / s } else { 1.0 };
    let w_value: Vec<f64> = quad.iter().map(|q| q * whiten(noise.value_flux)).collect();
    let w_density: Vec<f64> = quad
        .iter()
        .map(|q| q * whiten(noise.density_flux))
        .collect();
    let mut target2 = 0.0;
    for q in &quad {
        if noise.value_flux > 0.0 {
            target2 += q * q;
        }
        if noise.density_flux > 0.0 {
            target2 += q * q;
        }
    }
    let target = target2.sqrt();

    // Measured-minus-offset data vector.
    let mut value_gap = records.value_flux.clone();
    value_gap.axpy(-1.0, &offset.value_flux);
    let mut density_gap = records.density_flux.clone();
    density_gap.axpy(-1.0, &offset.density_flux);
    let data = stack_records(&value_gap, &density_gap, &w_value, &w_density);

    // Linear map, one column per interior node of the coefficient.
    let basis = InteriorBasis::new(grid.clone());
    let n_rows = data.len();
    let mut jac = DMatrix::zeros(n_rows, basis.len());
    let mut minus_q = state.drift.clone();
    minus_q.scale(-1.0);
    let value_timeline = CoeffTimeline::Static(OperatorCoeffs::advective(minus_q));
    let density_timeline = CoeffTimeline::Static(OperatorCoeffs::conservative(state.drift.clone()));
    let zero = ScalarField::constant(grid.clone(), 0.0);
    let zero_boundary = BoundaryData::zeros(grid.clone(), BoundaryKind::Trace);
    for (col, &node) in basis.interior.iter().enumerate() {
        let source = |level: usize, buf: &mut [f64]| {
            buf.fill(0.0);
            buf[node] = excitation_field.at(node, level);
        };
        let v = march_backward(
            &grid,
            &value_timeline,
            settings.theta,
            &zero,
            &zero_boundary,
            SourceSpec::Func(&source),
        )?;
        let m_source = density_coupling_source(&grid, metric, &state.density, &v);
        let m = march_forward(
            &grid,
            &density_timeline,
            settings.theta,
            &zero,
            &zero_boundary,
            SourceSpec::Levels(&m_source),
        )?;
        let column = stack_records(
            &ops::normal_derivative(&v),
            &ops::normal_derivative(&m),
            &w_value,
            &w_density,
        );
        jac.view_mut((0, col), (n_rows, 1)).copy_from(&column);
    }

    let penalty = basis.gradient_penalty();
    let solve = |lambda: f64| -> Result<(Vec<f64>, f64, f64), InverseError> {
        let fit = regularized_least_squares(&jac, &data, Some(&penalty), lambda)?;
        Ok((fit.solution, fit.data_residual, fit.rcond))
    };

    let (solution, misfit, lambda, rcond) = if settings.use_discrepancy && target > 0.0 {
        // Discrepancy rule: largest weight with misfit within the noise.
        let mut chosen: Option<(Vec<f64>, f64, f64, f64)> = None;
        for &lambda in &settings.lambda_ladder {
            let (sol, misfit, rcond) = solve(lambda)?;
            let acceptable = misfit <= settings.morozov_factor * target;
            let better = match &chosen {
                None => true,
                Some((_, best_misfit, _, _)) => misfit < *best_misfit,
            };
            if acceptable {
                chosen = Some((sol, misfit, lambda, rcond));
                break;
            }
            if better {
                chosen = Some((sol, misfit, lambda, rcond));
            }
        }
        let (sol, misfit, lambda, rcond) =
            chosen.expect("ladder is non-empty by construction");
        (sol, misfit, lambda, rcond)
    } else {
        let (sol, misfit, rcond) = solve(settings.fallback_lambda)?;
        (sol, misfit, settings.fallback_lambda, rcond)
    };

    let coefficient = ScalarField::new(grid.clone(), basis.scatter(&solution))
        .map_err(|e| InverseError::InsufficientData(format!("coefficient layout: {e}")))?;
    Ok(CoefficientRecovery {
        coefficient,
        lambda,
        misfit,
        target,
        excitation,
        rcond,
    })
}
