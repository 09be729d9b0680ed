//! Remainder equations of the probe ansatz, solved in conjugated variables.
//!
//! Writing the forward (density-side) probe as `w = exp(psi) (a + z)` and
//! inserting it into `dw/dt - Delta w - div(w q) = 0` turns the exponential
//! weight into a large constant advection:
//!
//! ```text
//! dz/dt = Delta z + 2 rho zeta . grad z + div(z q) + rho (zeta . q) z + S,
//! S     = L_c a - da/dt,
//! ```
//!
//! where `L_c` is the full conjugated spatial operator.  Because `a` kills
//! the order-`rho` terms along rays, `S` stays bounded as `rho` grows while
//! the advection sweeps mass out through the boundary in time
//! `~ diam / (2 rho)`, so `z = O(1/rho)` — the quantitative heart of the
//! probe argument, checked directly by the acceptance battery.
//!
//! The backward (value-side) probe `v = exp(-psi) (b + z)` conjugates
//! `-dv/dt - Delta v + q . grad v = 0` the same way, with everything real.
//!
//! Sources use the *discrete* time difference of the amplitude matched to
//! the implicit Euler step, so `amplitude + remainder` satisfies the
//! marched equation exactly, not just to O(dt); remainders carry
//! homogeneous data, so the probe equals its amplitude on the boundary.

use std::sync::Arc;

use super::cgo::{CgoParams, ProbeAmplitudes};
use crate::error::ProbeError;
use crate::fields::{
    BoundaryData, BoundaryKind, ComplexSpaceTimeField, Grid, ScalarField, SpaceTimeField,
    VectorField,
};
use crate::forward::operator::{self, OperatorCoeffs};
use crate::forward::{march_backward, march_forward, CoeffTimeline, SourceSpec};

/// One probe pair: amplitudes plus solved remainders.
#[derive(Debug, Clone)]
pub struct ProbePair {
    pub amplitudes: ProbeAmplitudes,
    /// `z` of the forward probe (complex with the oscillating amplitude).
    pub forward_remainder: ComplexSpaceTimeField,
    /// `z` of the backward probe (real).
    pub backward_remainder: SpaceTimeField,
}

fn constant_vector(grid: &Arc<Grid>, v: [f64; 2]) -> VectorField {
    VectorField::from_indexed_fn(grid.clone(), |_| v)
}

fn ray_potential(grid: &Arc<Grid>, drift: &VectorField, params: &CgoParams) -> ScalarField {
    let zeta = params.zeta;
    let rho = params.rho;
    ScalarField::new(
        grid.clone(),
        (0..grid.n_nodes())
            .map(|node| {
                let q = drift.at(node);
                rho * (zeta[0] * q[0] + zeta[1] * q[1])
            })
            .collect(),
    )
    .expect("finite drift")
}

/// Conjugated coefficients of the forward (density-side) probe.
pub fn forward_probe_coeffs(
    grid: &Arc<Grid>,
    drift: &VectorField,
    params: &CgoParams,
) -> OperatorCoeffs {
    OperatorCoeffs {
        advective: Some(constant_vector(
            grid,
            [
                2.0 * params.rho * params.zeta[0],
                2.0 * params.rho * params.zeta[1],
            ],
        )),
        divergence_drift: Some(drift.clone()),
        potential: Some(ray_potential(grid, drift, params)),
    }
}

/// Conjugated coefficients of the backward (value-side) probe.
pub fn backward_probe_coeffs(
    grid: &Arc<Grid>,
    drift: &VectorField,
    params: &CgoParams,
) -> OperatorCoeffs {
    let rho = params.rho;
    let zeta = params.zeta;
    let mut b = drift.clone();
    b.scale(-1.0);
    b.axpy(
        1.0,
        &constant_vector(grid, [-2.0 * rho * zeta[0], -2.0 * rho * zeta[1]]),
    );
    OperatorCoeffs {
        advective: Some(b),
        divergence_drift: None,
        potential: Some(ray_potential(grid, drift, params)),
    }
}

/// `S^l = L a^l - (a^l - a^other)/dt` at interior nodes, where `other` is
/// the previous level marching forward and the next level marching
/// backward — exactly what makes `a + z` solve the implicit Euler step.
fn conjugation_defect(
    grid: &Grid,
    coeffs: &OperatorCoeffs,
    amplitude: &SpaceTimeField,
    forward: bool,
) -> SpaceTimeField {
    let n = grid.n_nodes();
    let dt = grid.dt();
    let mut out = SpaceTimeField::zeros(amplitude.grid().clone());
    let mut scratch = vec![0.0; n];
    for level in 0..grid.levels() {
        // The endpoint level is never an unknown; its source is unused.
        let other = if forward {
            if level == 0 {
                continue;
            }
            level - 1
        } else {
            if level == grid.n_time() {
                continue;
            }
            level + 1
        };
        operator::apply(grid, coeffs, amplitude.level(level), &mut scratch);
        let here = amplitude.level(level);
        let there = amplitude.level(other);
        let out_level = out.level_mut(level);
        for node in 0..n {
            if grid.is_boundary(node) {
                continue;
            }
            out_level[node] = scratch[node] - (here[node] - there[node]) / dt;
        }
    }
    out
}

/// Solve both remainder equations of a probe pair (implicit Euler; the
/// conjugation is exact for that scheme).
pub fn solve_probe_pair(
    grid: &Arc<Grid>,
    drift: &VectorField,
    amplitudes: ProbeAmplitudes,
) -> Result<ProbePair, ProbeError> {
    let params = &amplitudes.params;
    let zero = ScalarField::constant(grid.clone(), 0.0);
    let zero_boundary = BoundaryData::zeros(grid.clone(), BoundaryKind::Trace);

    let fwd_coeffs = forward_probe_coeffs(grid, drift, params);
    let src_re = conjugation_defect(grid, &fwd_coeffs, &amplitudes.forward.re, true);
    let src_im = conjugation_defect(grid, &fwd_coeffs, &amplitudes.forward.im, true);
    let fwd_timeline = CoeffTimeline::Static(fwd_coeffs);
    let z_re = march_forward(
        grid,
        &fwd_timeline,
        1.0,
        &zero,
        &zero_boundary,
        SourceSpec::Levels(&src_re),
    )?;
    let z_im = march_forward(
        grid,
        &fwd_timeline,
        1.0,
        &zero,
        &zero_boundary,
        SourceSpec::Levels(&src_im),
    )?;

    let bwd_coeffs = backward_probe_coeffs(grid, drift, params);
    let src_b = conjugation_defect(grid, &bwd_coeffs, &amplitudes.backward, false);
    let bwd_timeline = CoeffTimeline::Static(bwd_coeffs);
    let z_b = march_backward(
        grid,
        &bwd_timeline,
        1.0,
        &zero,
        &zero_boundary,
        SourceSpec::Levels(&src_b),
    )?;

    Ok(ProbePair {
        amplitudes,
        forward_remainder: ComplexSpaceTimeField { re: z_re, im: z_im },
        backward_remainder: z_b,
    })
}

/// Conjugated response of the first-order value equation: solve
///
/// ```text
/// -dy/dt = Delta y - (q + 2 rho zeta) . grad y + rho (zeta . q) y,
/// y|_Sigma = data,   y(T) = 0,
/// ```
///
/// returning `y = exp(psi) u` for the physical first-order response `u` to
/// the exponentially weighted datum.  Working with `y` rather than `u` is
/// the only floating-point-viable way to read off probe responses.
pub fn conjugated_backward_response(
    grid: &Arc<Grid>,
    drift: &VectorField,
    params: &CgoParams,
    data: &BoundaryData,
) -> Result<SpaceTimeField, ProbeError> {
    let coeffs = backward_probe_coeffs(grid, drift, params);
    let zero = ScalarField::constant(grid.clone(), 0.0);
    Ok(march_backward(
        grid,
        &CoeffTimeline::Static(coeffs),
        1.0,
        &zero,
        data,
        SourceSpec::None,
    )?)
}
