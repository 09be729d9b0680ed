//! Stationary-state recovery once the drift is known.
//!
//! With `q` in hand the stationary system becomes linear, because the
//! quadratic energy collapses onto the drift itself:
//!
//! ```text
//! q = 2 A grad u0   =>   grad(u0)^T A grad(u0) = q . grad(u0) / 2,
//! ```
//!
//! so the value solves `-Delta u0 + q . grad(u0) / 2 = 0` and the density
//! solves `-Delta m0 - div(m0 q) = 0`, each a single Dirichlet solve from
//! the measured stationary traces.  The conformal factor then falls out
//! pointwise from the drift relation wherever the value gradient carries
//! information; where it degenerates the factor is filled harmonically and
//! flagged in the returned mask.

use std::sync::Arc;

use crate::error::InverseError;
use crate::fields::{ops, Grid, MetricField, ScalarField, VectorField};
use crate::forward::{operator_bandwidth, solve_steady, OperatorCoeffs};
use crate::linalg::BandMatrix;

/// Relative floor on `|g grad u0|^2` below which a node carries no
/// information about the conformal factor.
pub const DEFAULT_MASK_FLOOR: f64 = 1e-6;

/// Stationary value from the drift and its boundary trace: one linear
/// Dirichlet solve of `-Delta u + q . grad u / 2 = 0`.
pub fn recover_value(
    grid: &Arc<Grid>,
    drift: &VectorField,
    trace: &[f64],
) -> Result<ScalarField, InverseError> {
    let mut b = drift.clone();
    b.scale(-0.5);
    Ok(solve_steady(
        grid,
        &OperatorCoeffs::advective(b),
        None,
        trace,
    )?)
}

/// Stationary density from the drift and its boundary trace: one linear
/// Dirichlet solve of `-Delta m - div(m q) = 0`.
pub fn recover_density(
    grid: &Arc<Grid>,
    drift: &VectorField,
    trace: &[f64],
) -> Result<ScalarField, InverseError> {
    Ok(solve_steady(
        grid,
        &OperatorCoeffs::conservative(drift.clone()),
        None,
        trace,
    )?)
}

/// Conformal factor with its information mask.
#[derive(Debug, Clone)]
pub struct ConformalRecovery {
    pub kappa: ScalarField,
    /// `true` where the pointwise quotient was evaluated; `false` where the
    /// value gradient degenerates and the factor is interpolated.
    pub mask: Vec<bool>,
    /// Fraction of nodes carrying information.
    pub coverage: f64,
}

/// Conformal factor of the metric from the drift relation
/// `q = 2 kappa g grad(u0)`:
///
/// ```text
/// kappa = q . (g grad u0) / (2 |g grad u0|^2)
/// ```
///
/// evaluated where the denominator exceeds `floor` times its maximum.
/// Uninformative interior nodes receive a harmonic fill, uninformative
/// boundary nodes a linear extrapolation, all in one banded solve.
pub fn recover_conformal(
    base: &MetricField,
    drift: &VectorField,
    value: &ScalarField,
    floor: f64,
) -> Result<ConformalRecovery, InverseError> {
    let grid = value.grid().clone();
    let n = grid.n_nodes();
    let grad = ops::gradient(value);

    let mut quotient = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for node in 0..n {
        let gg = base.apply_base_at(node, grad.at(node));
        let q = drift.at(node);
        let denom = gg[0] * gg[0] + gg[1] * gg[1];
        weight[node] = denom;
        if denom > 0.0 {
            quotient[node] = (q[0] * gg[0] + q[1] * gg[1]) / (2.0 * denom);
        }
    }
    let w_max = weight.iter().cloned().fold(0.0f64, f64::max);
    if w_max <= 0.0 {
        return Err(InverseError::DegenerateEverywhere);
    }
    let threshold = floor * w_max;
    let mask: Vec<bool> = weight.iter().map(|&w| w >= threshold).collect();
    let informative = mask.iter().filter(|&&m| m).count();
    if informative == 0 {
        return Err(InverseError::DegenerateEverywhere);
    }

    // One banded system: identity rows where the quotient is trusted,
    // harmonic rows across interior gaps, extrapolation rows on the
    // boundary.  Bandwidth twice the operator's for the two-node
    // extrapolation stencils.
    let bw = 2 * operator_bandwidth(&grid);
    let mut mat = BandMatrix::zeros(n, bw, bw);
    let mut rhs = vec![0.0; n];
    let stride = |axis: usize| -> usize {
        if grid.dim() == 1 || axis == 1 {
            1
        } else {
            grid.n_cells()[1]
        }
    };
    for node in 0..n {
        if mask[node] {
            mat.set(node, node, 1.0);
            rhs[node] = quotient[node];
            continue;
        }
        if !grid.is_boundary(node) {
            let mut diag = 0.0;
            for axis in 0..grid.dim() {
                let h2 = grid.h()[axis] * grid.h()[axis];
                mat.add(node, node - stride(axis), 1.0 / h2);
                mat.add(node, node + stride(axis), 1.0 / h2);
                diag -= 2.0 / h2;
            }
            mat.set(node, node, diag);
            continue;
        }
        // Uninformative boundary node: extend from the inside.
        let (i0, i1) = grid.multi_index(node);
        let cells = grid.n_cells();
        let mut inward: i64 = 0;
        let mut axes_on_edge = 0;
        if i0 == 0 {
            inward += stride(0) as i64;
            axes_on_edge += 1;
        } else if i0 == cells[0] - 1 {
            inward -= stride(0) as i64;
            axes_on_edge += 1;
        }
        if grid.dim() == 2 {
            if i1 == 0 {
                inward += 1;
                axes_on_edge += 1;
            } else if i1 == cells[1] - 1 {
                inward -= 1;
                axes_on_edge += 1;
            }
        }
        mat.set(node, node, 1.0);
        if axes_on_edge == 2 {
            // Corner: copy the diagonal neighbor.
            mat.add(node, (node as i64 + inward) as usize, -1.0);
        } else {
            // Face: linear extrapolation along the inward normal.
            mat.add(node, (node as i64 + inward) as usize, -2.0);
            mat.add(node, (node as i64 + 2 * inward) as usize, 1.0);
        }
    }
    let lu = mat.factor()?;
    lu.solve_in_place(&mut rhs);

    // Positivity is part of the model class: the factor scales a metric, so a
    // noisy quotient that crosses zero is projected back to a small positive
    // floor tied to the trusted scale. Clean recoveries never hit the floor.
    let mut trusted: Vec<f64> = rhs
        .iter()
        .zip(&mask)
        .filter(|&(&k, &m)| m && k > 0.0)
        .map(|(&k, _)| k)
        .collect();
    if trusted.is_empty() {
        return Err(InverseError::DegenerateEverywhere);
    }
    trusted.sort_by(|a, b| a.total_cmp(b));
    let positive_floor = 1e-3 * trusted[trusted.len() / 2];
    for k in rhs.iter_mut() {
        *k = k.max(positive_floor);
    }

    let kappa = ScalarField::new(grid.clone(), rhs)
        .map_err(|e| InverseError::InsufficientData(format!("conformal fill: {e}")))?;
    Ok(ConformalRecovery {
        kappa,
        mask,
        coverage: informative as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{solve_stationary, NewtonParams};
    use crate::reference::ConformalFamily1d;

    fn family_setup() -> (
        Arc<Grid>,
        MetricField,
        crate::forward::StationaryState,
        ConformalFamily1d,
    ) {
        let fam = ConformalFamily1d::standard();
        let grid = Grid::new_1d(0.0, 1.0, 33, 0.25, 8).unwrap();
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
        let state =
            solve_stationary(&grid, &metric, &u_trace, &m_trace, &NewtonParams::default())
                .unwrap();
        (grid, metric, state, fam)
    }

    #[test]
    fn exact_drift_reproduces_the_stationary_pair_and_factor() {
        let (grid, metric, state, fam) = family_setup();
        let u_trace: Vec<f64> = grid
            .sigma_nodes()
            .iter()
            .map(|&n| state.value.at(n))
            .collect();
        let m_trace: Vec<f64> = grid
            .sigma_nodes()
            .iter()
            .map(|&n| state.density.at(n))
            .collect();

        let value = recover_value(&grid, &state.drift, &u_trace).unwrap();
        assert!(
            value.sup_distance(&state.value) < 1e-8,
            "value gap {:.2e}",
            value.sup_distance(&state.value)
        );

        let density = recover_density(&grid, &state.drift, &m_trace).unwrap();
        assert!(
            density.sup_distance(&state.density) < 1e-10,
            "density gap {:.2e}",
            density.sup_distance(&state.density)
        );

        let identity_base = MetricField::isotropic(grid.clone(), vec![1.0; grid.n_nodes()]).unwrap();
        let conformal =
            recover_conformal(&identity_base, &state.drift, &value, DEFAULT_MASK_FLOOR).unwrap();
        // The family's value gradient never vanishes, so every node informs.
        assert!(conformal.coverage > 0.999);
        let mut worst = 0.0f64;
        for node in grid.interior_nodes() {
            let truth = fam.kappa(grid.coords(node)[0]);
            worst = worst.max((conformal.kappa.at(node) - truth).abs() / truth);
        }
        assert!(worst < 5e-3, "conformal factor error {worst:.2e}");
        let _ = metric;
    }

    #[test]
    fn degenerate_gradient_nodes_are_masked_and_bridged() {
        let grid = Grid::new_1d(0.0, 1.0, 33, 0.25, 8).unwrap();
        let base = MetricField::isotropic(grid.clone(), vec![1.0; grid.n_nodes()]).unwrap();
        // u = sin(pi x) has a flat spot at the center; kappa = 1 + 0.2 x.
        let value = ScalarField::from_fn(grid.clone(), |x| (std::f64::consts::PI * x[0]).sin());
        let kappa_true = ScalarField::from_fn(grid.clone(), |x| 1.0 + 0.2 * x[0]);
        let grad = ops::gradient(&value);
        let drift = VectorField::from_indexed_fn(grid.clone(), |node| {
            let g = grad.at(node);
            [2.0 * kappa_true.at(node) * g[0], 0.0]
        });

        let recovery = recover_conformal(&base, &drift, &value, 1e-4).unwrap();
        assert!(recovery.coverage < 1.0, "expected a masked flat spot");
        assert!(recovery.coverage > 0.8);
        for node in 0..grid.n_nodes() {
            if recovery.mask[node] {
                let err = (recovery.kappa.at(node) - kappa_true.at(node)).abs();
                assert!(err < 1e-10, "informative node {node} off by {err:.2e}");
            } else {
                // Bridged: finite and between the neighboring true values.
                let k = recovery.kappa.at(node);
                assert!(k.is_finite() && k > 0.9 && k < 1.3, "fill {k} at {node}");
            }
        }
    }

    #[test]
    fn all_flat_gradient_is_rejected() {
        let grid = Grid::new_1d(0.0, 1.0, 9, 0.25, 4).unwrap();
        let base = MetricField::isotropic(grid.clone(), vec![1.0; grid.n_nodes()]).unwrap();
        let value = ScalarField::constant(grid.clone(), 1.0);
        let drift = VectorField::zeros(grid.clone());
        let err = recover_conformal(&base, &drift, &value, 1e-6).unwrap_err();
        assert!(matches!(err, InverseError::DegenerateEverywhere));
    }
}
