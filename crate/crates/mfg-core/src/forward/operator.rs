//! Shared assembly of the spatial operator
//!
//! ```text
//! L y = Delta y + b . grad y + div(y w) + c y
//! ```
//!
//! on interior nodes, with central stencils.  Every solver in the crate —
//! elliptic, parabolic, stationary Newton — draws its rows from this module,
//! so a field that kills `L` in one solver kills it in all of them to the
//! last bit.  Boundary rows are the caller's business (Dirichlet identity
//! everywhere in practice).

use crate::fields::{Grid, ScalarField, VectorField};
use crate::linalg::BandMatrix;

/// Coefficients of the spatial operator at one time level.  Absent entries
/// are zero.
#[derive(Debug, Clone, Default)]
pub struct OperatorCoeffs {
    /// `b` in `b . grad y` (advective form).
    pub advective: Option<VectorField>,
    /// `w` in `div(y w)` (conservative form).
    pub divergence_drift: Option<VectorField>,
    /// `c` in `c y`.
    pub potential: Option<ScalarField>,
}

impl OperatorCoeffs {
    pub fn diffusion_only() -> Self {
        OperatorCoeffs::default()
    }

    pub fn advective(b: VectorField) -> Self {
        OperatorCoeffs {
            advective: Some(b),
            ..Default::default()
        }
    }

    pub fn conservative(w: VectorField) -> Self {
        OperatorCoeffs {
            divergence_drift: Some(w),
            ..Default::default()
        }
    }
}

/// Sub- and super-diagonal count of the interior stencil under row-major
/// node ordering (axis 0 slowest).
pub fn operator_bandwidth(grid: &Grid) -> usize {
    if grid.dim() == 1 {
        1
    } else {
        grid.n_cells()[1]
    }
}

/// Flat-index offsets of the two neighbors along an axis.
fn axis_stride(grid: &Grid, axis: usize) -> usize {
    if grid.dim() == 1 || axis == 1 {
        1
    } else {
        grid.n_cells()[1]
    }
}

/// Assemble `alpha I + beta L` rows at interior nodes and identity rows at
/// boundary nodes.
pub fn assemble(grid: &Grid, coeffs: &OperatorCoeffs, alpha: f64, beta: f64) -> BandMatrix {
    let n = grid.n_nodes();
    let bw = operator_bandwidth(grid);
    let mut mat = BandMatrix::zeros(n, bw, bw);
    for node in 0..n {
        if grid.is_boundary(node) {
            mat.set(node, node, 1.0);
            continue;
        }
        let mut diag = alpha;
        if let Some(c) = &coeffs.potential {
            diag += beta * c.at(node);
        }
        for axis in 0..grid.dim() {
            let h = grid.h()[axis];
            let stride = axis_stride(grid, axis);
            let lo = node - stride;
            let hi = node + stride;
            // Diffusion: central second difference.
            diag += beta * (-2.0 / (h * h));
            let mut c_lo = beta / (h * h);
            let mut c_hi = beta / (h * h);
            // Advective drift: central first difference with the local b.
            if let Some(b) = &coeffs.advective {
                let ba = b.comp(axis)[node];
                c_hi += beta * ba / (2.0 * h);
                c_lo -= beta * ba / (2.0 * h);
            }
            // Conservative drift: central difference of the product, so the
            // neighbor's w value multiplies the neighbor's y value.
            if let Some(w) = &coeffs.divergence_drift {
                let wc = w.comp(axis);
                c_hi += beta * wc[hi] / (2.0 * h);
                c_lo -= beta * wc[lo] / (2.0 * h);
            }
            mat.add(node, lo, c_lo);
            mat.add(node, hi, c_hi);
        }
        mat.add(node, node, diag);
    }
    mat
}

/// Apply `L` at interior nodes, writing zeros at boundary nodes.  Same
/// arithmetic as [`assemble`], kept matrix-free for explicit stages and
/// residual evaluation.
pub fn apply(grid: &Grid, coeffs: &OperatorCoeffs, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(y.len(), grid.n_nodes());
    debug_assert_eq!(out.len(), grid.n_nodes());
    for node in 0..grid.n_nodes() {
        if grid.is_boundary(node) {
            out[node] = 0.0;
            continue;
        }
        let mut acc = 0.0;
        if let Some(c) = &coeffs.potential {
            acc += c.at(node) * y[node];
        }
        for axis in 0..grid.dim() {
            let h = grid.h()[axis];
            let stride = axis_stride(grid, axis);
            let lo = node - stride;
            let hi = node + stride;
            acc += (y[hi] - 2.0 * y[node] + y[lo]) / (h * h);
            if let Some(b) = &coeffs.advective {
                acc += b.comp(axis)[node] * (y[hi] - y[lo]) / (2.0 * h);
            }
            if let Some(w) = &coeffs.divergence_drift {
                let wc = w.comp(axis);
                acc += (wc[hi] * y[hi] - wc[lo] * y[lo]) / (2.0 * h);
            }
        }
        out[node] = acc;
    }
}
