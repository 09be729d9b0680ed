//! Differentiability check of the boundary measurement map.
//!
//! For a single direction `(g, h)` scaled by `eps`, the measurement map
//! should expand as
//!
//! ```text
//! D(eps) = D(0) + eps L1 + eps^2 L2 + O(eps^3),
//! ```
//!
//! where `L1` comes from the first-order pair and `L2 = mixed / 2` from the
//! repeated-direction second-order pair.  The report solves the full
//! nonlinear system down a ladder of sizes and fits the decay exponents of
//! the remainders: dropping `L1` leaves a residual of order 2, dropping
//! both leaves order 3.  Slopes far from 2 and 3 mean the cascade and the
//! nonlinear solver disagree about the same discrete system.

use crate::error::SolverError;
use crate::fields::MetricField;
use crate::forward::{
    measure, measure_fields, measure_stationary, solve_perturbed, FixedPointParams,
    PerturbationSpec, RunningCost, StationaryState,
};

use super::cascade::{solve_second_order, taylor_pair};

/// Remainder decay of the measurement map along one direction.
#[derive(Debug, Clone)]
pub struct FrechetReport {
    pub epsilons: Vec<f64>,
    /// `sup |D(eps) - D(0) - eps L1|` over all four boundary records.
    pub first_remainders: Vec<f64>,
    /// `sup |D(eps) - D(0) - eps L1 - eps^2 L2|`.
    pub second_remainders: Vec<f64>,
    /// Fitted exponent of the first remainder (expected near 2).
    pub first_slope: f64,
    /// Fitted exponent of the second remainder (expected near 3).
    pub second_slope: f64,
    /// Sup norm of the first-order records, for judging relative size.
    pub record_scale: f64,
}

/// Least-squares exponent of `err ~ C eps^slope`.
pub fn fit_slope(epsilons: &[f64], errors: &[f64]) -> f64 {
    let n = epsilons.len() as f64;
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Compare full nonlinear solves against the first two expansion orders
/// down a ladder of perturbation sizes.
pub fn frechet_report(
    state: &StationaryState,
    metric: &MetricField,
    cost: &RunningCost,
    direction: &PerturbationSpec,
    epsilons: &[f64],
    theta: f64,
    params: &FixedPointParams,
) -> Result<FrechetReport, SolverError> {
    if epsilons.len() < 2 {
        return Err(SolverError::InvalidInput(
            "remainder slopes need at least two sizes".into(),
        ));
    }
    let orders = solve_second_order(state, metric, cost, direction, direction, theta)?;
    let taylor2 = taylor_pair(&orders.mixed, 2);
    let l1 = measure_fields(&orders.first_a.value, &orders.first_a.density);
    let l2 = measure_fields(&taylor2.value, &taylor2.density);
    let baseline = measure_stationary(state);

    let mut first_remainders = Vec::with_capacity(epsilons.len());
    let mut second_remainders = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let full = solve_perturbed(state, metric, cost, std::slice::from_ref(direction), &[eps], params)?;
        let mut delta = measure(&full).difference(&baseline);
        delta.axpy(-eps, &l1);
        first_remainders.push(delta.sup_norm());
        delta.axpy(-eps * eps, &l2);
        second_remainders.push(delta.sup_norm());
    }
    Ok(FrechetReport {
        epsilons: epsilons.to_vec(),
        first_slope: fit_slope(epsilons, &first_remainders),
        second_slope: fit_slope(epsilons, &second_remainders),
        first_remainders,
        second_remainders,
        record_scale: l1.sup_norm(),
    })
}
