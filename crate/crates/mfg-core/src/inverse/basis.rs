//! Interior-node parameterization shared by the recovery routines.
//!
//! Boundary measurements never constrain coefficient values *on* the
//! boundary (sources and advection only act at interior rows), so unknown
//! fields are parameterized on interior nodes and extended to the boundary
//! by second-order extrapolation afterwards.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::fields::Grid;

/// Interior-node index map.
pub(crate) struct InteriorBasis {
    pub grid: Arc<Grid>,
    pub interior: Vec<usize>,
    /// Position of a node within `interior`, if it is interior.
    pub index_of: Vec<Option<usize>>,
}

impl InteriorBasis {
    pub fn new(grid: Arc<Grid>) -> Self {
        let interior: Vec<usize> = grid.interior_nodes().collect();
        let mut index_of = vec![None; grid.n_nodes()];
        for (k, &node) in interior.iter().enumerate() {
            index_of[node] = Some(k);
        }
        InteriorBasis {
            grid,
            interior,
            index_of,
        }
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    /// Interior coefficients to a full node vector, boundary extrapolated.
    pub fn scatter(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.n_nodes()];
        for (k, &node) in self.interior.iter().enumerate() {
            full[node] = x[k];
        }
        extrapolate_boundary(&self.grid, &mut full);
        full
    }

    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&n| full[n]).collect()
    }

    /// First-difference penalty rows between adjacent interior unknowns:
    /// `1/h` per axis for the difference quotient, times the square root of
    /// the cell volume, so the squared row sum approximates the continuum
    /// seminorm `int |grad . |^2` at every resolution and one weight means
    /// the same amount of smoothing on every grid.
    pub fn gradient_penalty(&self) -> DMatrix<f64> {
        let grid = &self.grid;
        let volume = if grid.dim() == 1 {
            grid.h()[0]
        } else {
            grid.h()[0] * grid.h()[1]
        };
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        for (k, &node) in self.interior.iter().enumerate() {
            for axis in 0..grid.dim() {
                let stride = if grid.dim() == 1 || axis == 1 {
                    1
                } else {
                    grid.n_cells()[1]
                };
                let neighbor = node + stride;
                if let Some(Some(j)) = self.index_of.get(neighbor) {
                    rows.push((k, *j, volume.sqrt() / grid.h()[axis]));
                }
            }
        }
        let mut l = DMatrix::zeros(rows.len(), self.len());
        for (r, &(a, b, w)) in rows.iter().enumerate() {
            l[(r, a)] = -w;
            l[(r, b)] = w;
        }
        l
    }
}

/// Square root of the surface-time quadrature weight for every
/// `(level, position)` boundary sample, level-major — the row scaling that
/// turns a discrete residual sum into an integral over the lateral boundary.
pub(crate) fn surface_quadrature_sqrt(grid: &Grid) -> Vec<f64> {
    let sigma = grid.sigma_weights();
    let mut w = Vec::with_capacity(grid.levels() * sigma.len());
    for level in 0..grid.levels() {
        let tw = grid.time_weight(level);
        for &sw in &sigma {
            w.push((tw * sw).sqrt());
        }
    }
    w
}

/// Fill boundary values by linear extrapolation from the two nearest
/// interior nodes: faces first along their inward normal, then corners from
/// the now-filled face values.
pub(crate) fn extrapolate_boundary(grid: &Grid, values: &mut [f64]) {
    let n = grid.n_cells();
    if grid.dim() == 1 {
        values[0] = 2.0 * values[1] - values[2];
        values[n[0] - 1] = 2.0 * values[n[0] - 2] - values[n[0] - 3];
        return;
    }
    let corner = |i0: usize, i1: usize| {
        (i0 == 0 || i0 == n[0] - 1) && (i1 == 0 || i1 == n[1] - 1)
    };
    // Face nodes: extrapolate inward along the face normal.
    for &node in grid.sigma_nodes() {
        let (i0, i1) = grid.multi_index(node);
        if corner(i0, i1) {
            continue;
        }
        let (axis, flip) = if i0 == 0 {
            (0, false)
        } else if i0 == n[0] - 1 {
            (0, true)
        } else if i1 == 0 {
            (1, false)
        } else {
            (1, true)
        };
        let stride = if axis == 0 { n[1] } else { 1 };
        let (a, b) = if flip {
            (node - stride, node - 2 * stride)
        } else {
            (node + stride, node + 2 * stride)
        };
        values[node] = 2.0 * values[a] - values[b];
    }
    // Corners: average the two along-face extrapolations.
    for &node in grid.sigma_nodes() {
        let (i0, i1) = grid.multi_index(node);
        if !corner(i0, i1) {
            continue;
        }
        let s0 = n[1];
        let along0 = if i0 == 0 {
            2.0 * values[node + s0] - values[node + 2 * s0]
        } else {
            2.0 * values[node - s0] - values[node - 2 * s0]
        };
        let along1 = if i1 == 0 {
            2.0 * values[node + 1] - values[node + 2]
        } else {
            2.0 * values[node - 1] - values[node - 2]
        };
        values[node] = 0.5 * (along0 + along1);
    }
}
