//! Uniform node-centered lattices on axis-aligned boxes in one and two
//! dimensions, together with the time axis used by evolution fields.
//!
//! Nodes along axis `a` sit at `lo + i * h` with `h = (hi - lo) / (n - 1)`,
//! so both endpoints carry nodes.  The flat node index runs with axis 0
//! slowest: `idx = i0 * n1 + i1`.  Time levels are `t_k = k * dt` for
//! `k = 0..=n_time` with `dt = t_horizon / n_time`.
//!
//! Spatial quadrature is the tensor trapezoid rule (endpoint weights halved);
//! the same rule is used on the time axis.  The boundary node set `sigma` is
//! kept in sorted flat-index order; faces expose per-face outward normals so
//! that flux sums at two-dimensional corners pick up both face contributions.

use crate::error::FieldError;
use std::sync::Arc;

pub const SIGMA_INTERIOR: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extent: [[f64; 2]; 2],
    n_cells: [usize; 2],
    h: [f64; 2],
    t_horizon: f64,
    n_time: usize,
    dt: f64,
    boundary: Vec<usize>,
    sigma_of_node: Vec<u32>,
}

/// One lattice line along a fixed axis, with the quadrature weight of its
/// transverse position.
#[derive(Debug, Clone, Copy)]
pub struct Line {
    pub start: usize,
    pub stride: usize,
    pub len: usize,
    pub transverse_weight: f64,
}

/// One boundary face: all nodes with a fixed extreme index along `axis`.
#[derive(Debug, Clone)]
pub struct Face {
    pub axis: usize,
    /// 0 for the low end, 1 for the high end.
    pub side: usize,
    pub nodes: Vec<usize>,
    /// Tangential quadrature weight per node (1.0 in one dimension).
    pub weights: Vec<f64>,
    pub normal: [f64; 2],
}

impl Grid {
    pub fn new_1d(
        lo: f64,
        hi: f64,
        n_cells: usize,
        t_horizon: f64,
        n_time: usize,
    ) -> Result<Arc<Self>, FieldError> {
        Self::build(1, [[lo, hi], [0.0, 0.0]], [n_cells, 1], t_horizon, n_time)
    }

    pub fn new_2d(
        extent: [[f64; 2]; 2],
        n_cells: [usize; 2],
        t_horizon: f64,
        n_time: usize,
    ) -> Result<Arc<Self>, FieldError> {
        Self::build(2, extent, n_cells, t_horizon, n_time)
    }

    fn build(
        dim: usize,
        extent: [[f64; 2]; 2],
        n_cells: [usize; 2],
        t_horizon: f64,
        n_time: usize,
    ) -> Result<Arc<Self>, FieldError> {
        for a in 0..dim {
            if !(extent[a][1] > extent[a][0]) {
                return Err(FieldError::InvalidGrid(format!(
                    "axis {a}: upper bound {} must exceed lower bound {}",
                    extent[a][1], extent[a][0]
                )));
            }
            if n_cells[a] < 4 {
                return Err(FieldError::InvalidGrid(format!(
                    "axis {a}: need at least 4 nodes for the boundary closures, got {}",
                    n_cells[a]
                )));
            }
        }
        if dim == 1 && n_cells[1] != 1 {
            return Err(FieldError::InvalidGrid(
                "one-dimensional grid must have a single node on axis 1".into(),
            ));
        }
        if !(t_horizon > 0.0) {
            return Err(FieldError::InvalidGrid(format!(
                "time horizon must be positive, got {t_horizon}"
            )));
        }
        if n_time < 2 {
            return Err(FieldError::InvalidGrid(format!(
                "need at least 2 time steps, got {n_time}"
            )));
        }
        let mut h = [0.0; 2];
        for a in 0..dim {
            h[a] = (extent[a][1] - extent[a][0]) / (n_cells[a] - 1) as f64;
        }
        let dt = t_horizon / n_time as f64;

        let total = n_cells[0] * n_cells[1];
        let mut sigma_of_node = vec![SIGMA_INTERIOR; total];
        let mut boundary = Vec::new();
        for i0 in 0..n_cells[0] {
            for i1 in 0..n_cells[1] {
                let on_boundary = i0 == 0
                    || i0 == n_cells[0] - 1
                    || (dim == 2 && (i1 == 0 || i1 == n_cells[1] - 1));
                if on_boundary {
                    let idx = i0 * n_cells[1] + i1;
                    sigma_of_node[idx] = boundary.len() as u32;
                    boundary.push(idx);
                }
            }
        }

        Ok(Arc::new(Grid {
            dim,
            extent,
            n_cells,
            h,
            t_horizon,
            n_time,
            dt,
            boundary,
            sigma_of_node,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> &[[f64; 2]; 2] {
        &self.extent
    }

    pub fn n_cells(&self) -> [usize; 2] {
        self.n_cells
    }

    pub fn h(&self) -> [f64; 2] {
        self.h
    }

    pub fn h_min(&self) -> f64 {
        (0..self.dim).map(|a| self.h[a]).fold(f64::INFINITY, f64::min)
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time levels (`n_time + 1`).
    pub fn levels(&self) -> usize {
        self.n_time + 1
    }

    pub fn t(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells[0] * self.n_cells[1]
    }

    #[inline]
    pub fn node_index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.n_cells[1] + i1
    }

    #[inline]
    pub fn multi_index(&self, node: usize) -> (usize, usize) {
        (node / self.n_cells[1], node % self.n_cells[1])
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let (i0, i1) = self.multi_index(node);
        let mut x = [0.0; 2];
        x[0] = self.extent[0][0] + i0 as f64 * self.h[0];
        if self.dim == 2 {
            x[1] = self.extent[1][0] + i1 as f64 * self.h[1];
        }
        x
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        let mut s = 0.0;
        for a in 0..self.dim {
            let d = self.extent[a][1] - self.extent[a][0];
            s += d * d;
        }
        s.sqrt()
    }

    #[inline]
    pub fn is_boundary(&self, node: usize) -> bool {
        self.sigma_of_node[node] != SIGMA_INTERIOR
    }

    /// Sorted flat indices of the boundary node set.
    pub fn sigma_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn sigma_len(&self) -> usize {
        self.boundary.len()
    }

    /// Position of `node` within the boundary enumeration, if it lies on it.
    pub fn sigma_pos(&self, node: usize) -> Option<usize> {
        let s = self.sigma_of_node[node];
        (s != SIGMA_INTERIOR).then_some(s as usize)
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(|&i| !self.is_boundary(i))
    }

    /// Surface quadrature weight of each boundary node, in `sigma_nodes`
    /// order.  One dimension counts each endpoint with unit weight; two
    /// dimensions use the trapezoid weight of every face the node lies on,
    /// so corners accumulate a share from both.
    pub fn sigma_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.sigma_len()];
        if self.dim == 1 {
            w.iter_mut().for_each(|v| *v = 1.0);
            return w;
        }
        for (pos, &node) in self.boundary.iter().enumerate() {
            let (i0, i1) = self.multi_index(node);
            let mut acc = 0.0;
            if i0 == 0 || i0 == self.n_cells[0] - 1 {
                acc += self.axis_weight(1, i1);
            }
            if i1 == 0 || i1 == self.n_cells[1] - 1 {
                acc += self.axis_weight(0, i0);
            }
            w[pos] = acc;
        }
        w
    }

    /// Tensor trapezoid quadrature weight of a node.
    pub fn weight(&self, node: usize) -> f64 {
        let (i0, i1) = self.multi_index(node);
        let mut w = self.axis_weight(0, i0);
        if self.dim == 2 {
            w *= self.axis_weight(1, i1);
        }
        w
    }

    #[inline]
    pub fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        let n = self.n_cells[axis];
        if i == 0 || i == n - 1 {
            0.5 * self.h[axis]
        } else {
            self.h[axis]
        }
    }

    /// Trapezoid weight on the time axis.
    pub fn time_weight(&self, level: usize) -> f64 {
        if level == 0 || level == self.n_time {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Lattice lines along `axis`, each with its transverse quadrature weight.
    pub fn lines(&self, axis: usize) -> Vec<Line> {
        assert!(axis < self.dim, "axis {axis} out of range");
        match (self.dim, axis) {
            (1, 0) => vec![Line {
                start: 0,
                stride: 1,
                len: self.n_cells[0],
                transverse_weight: 1.0,
            }],
            (2, 0) => (0..self.n_cells[1])
                .map(|t| Line {
                    start: t,
                    stride: self.n_cells[1],
                    len: self.n_cells[0],
                    transverse_weight: self.axis_weight(1, t),
                })
                .collect(),
            (2, 1) => (0..self.n_cells[0])
                .map(|t| Line {
                    start: t * self.n_cells[1],
                    stride: 1,
                    len: self.n_cells[1],
                    transverse_weight: self.axis_weight(0, t),
                })
                .collect(),
            _ => unreachable!(),
        }
    }

    /// Boundary faces with outward normals.  Corner nodes in two dimensions
    /// belong to two faces, once per adjacent face.
    pub fn faces(&self) -> Vec<Face> {
        let mut faces = Vec::new();
        for axis in 0..self.dim {
            for side in 0..2 {
                let fixed = if side == 0 { 0 } else { self.n_cells[axis] - 1 };
                let mut normal = [0.0; 2];
                normal[axis] = if side == 0 { -1.0 } else { 1.0 };
                let (nodes, weights) = if self.dim == 1 {
                    (vec![self.node_index(fixed, 0)], vec![1.0])
                } else {
                    let other = 1 - axis;
                    let mut nodes = Vec::with_capacity(self.n_cells[other]);
                    let mut weights = Vec::with_capacity(self.n_cells[other]);
                    for t in 0..self.n_cells[other] {
                        let (i0, i1) = if axis == 0 { (fixed, t) } else { (t, fixed) };
                        nodes.push(self.node_index(i0, i1));
                        weights.push(self.axis_weight(other, t));
                    }
                    (nodes, weights)
                };
                faces.push(Face {
                    axis,
                    side,
                    nodes,
                    weights,
                    normal,
                });
            }
        }
        faces
    }

    /// Outward normal at a boundary node; at two-dimensional corners the two
    /// face normals are averaged and renormalized.
    pub fn outward_normal(&self, node: usize) -> [f64; 2] {
        let (i0, i1) = self.multi_index(node);
        let mut normal = [0.0f64; 2];
        if i0 == 0 {
            normal[0] -= 1.0;
        }
        if i0 == self.n_cells[0] - 1 {
            normal[0] += 1.0;
        }
        if self.dim == 2 {
            if i1 == 0 {
                normal[1] -= 1.0;
            }
            if i1 == self.n_cells[1] - 1 {
                normal[1] += 1.0;
            }
        }
        let len = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
        assert!(len > 0.0, "node {node} is not on the boundary");
        [normal[0] / len, normal[1] / len]
    }

    /// True when two grids describe the same lattice and time axis.
    pub fn same_layout(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.n_cells == other.n_cells
            && self.n_time == other.n_time
            && self.extent == other.extent
            && self.t_horizon == other.t_horizon
    }
}
