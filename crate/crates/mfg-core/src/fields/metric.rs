//! Kinetic-energy metric `A(x) = kappa(x) g(x)`.
//!
//! The base tensor `g` is a known symmetric positive definite field; the
//! scalar conformal factor `kappa > 0` is the unknown the inverse stage
//! recovers.  Storage keeps the two factors separate so reconstruction code
//! can swap in a candidate `kappa` against the same base.
//!
//! Packed symmetric layout per node: 1D `[g11]`, 2D `[g11, g12, g22]`.

use std::sync::Arc;

use super::field::{check_finite, ScalarField, VectorField};
use super::grid::Grid;
use crate::error::FieldError;

#[derive(Debug, Clone)]
pub struct MetricField {
    grid: Arc<Grid>,
    /// Packed symmetric entries of the base tensor, node-major:
    /// `base[node * packed + slot]`.
    base: Vec<f64>,
    kappa: Vec<f64>,
}

fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl MetricField {
    /// Build from packed base entries and a conformal factor, validating
    /// symmetry is implicit (packed), positive definiteness of the base, and
    /// strict positivity of `kappa` at every node.
    pub fn new(grid: Arc<Grid>, base: Vec<f64>, kappa: Vec<f64>) -> Result<Self, FieldError> {
        let packed = packed_len(grid.dim());
        if base.len() != grid.n_nodes() * packed {
            return Err(FieldError::LengthMismatch {
                got: base.len(),
                expected: grid.n_nodes() * packed,
            });
        }
        if kappa.len() != grid.n_nodes() {
            return Err(FieldError::LengthMismatch {
                got: kappa.len(),
                expected: grid.n_nodes(),
            });
        }
        check_finite(&base)?;
        check_finite(&kappa)?;
        for node in 0..grid.n_nodes() {
            let b = &base[node * packed..(node + 1) * packed];
            let pd = match grid.dim() {
                1 => b[0] > 0.0,
                _ => b[0] > 0.0 && b[0] * b[2] - b[1] * b[1] > 0.0,
            };
            if !pd {
                return Err(FieldError::NotPositiveDefinite { node });
            }
            if kappa[node] <= 0.0 {
                return Err(FieldError::NonPositiveFactor {
                    node,
                    value: kappa[node],
                });
            }
        }
        Ok(Self { grid, base, kappa })
    }

    /// Euclidean base (`g = I`) with the given conformal factor.
    pub fn isotropic(grid: Arc<Grid>, kappa: Vec<f64>) -> Result<Self, FieldError> {
        let packed = packed_len(grid.dim());
        let mut base = vec![0.0; grid.n_nodes() * packed];
        for node in 0..grid.n_nodes() {
            base[node * packed] = 1.0;
            if grid.dim() == 2 {
                base[node * packed + 2] = 1.0;
            }
        }
        Self::new(grid, base, kappa)
    }

    pub fn from_fns(
        grid: Arc<Grid>,
        base_fn: impl Fn([f64; 2]) -> [[f64; 2]; 2],
        kappa_fn: impl Fn([f64; 2]) -> f64,
    ) -> Result<Self, FieldError> {
        let packed = packed_len(grid.dim());
        let mut base = Vec::with_capacity(grid.n_nodes() * packed);
        let mut kappa = Vec::with_capacity(grid.n_nodes());
        for node in 0..grid.n_nodes() {
            let x = grid.coords(node);
            let m = base_fn(x);
            base.push(m[0][0]);
            if grid.dim() == 2 {
                base.push(m[0][1]);
                base.push(m[1][1]);
            }
            kappa.push(kappa_fn(x));
        }
        Self::new(grid, base, kappa)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn kappa_field(&self) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.kappa.clone()).expect("kappa is validated")
    }

    /// Replace the conformal factor, keeping the base tensor.
    pub fn with_kappa(&self, kappa: Vec<f64>) -> Result<Self, FieldError> {
        Self::new(self.grid.clone(), self.base.clone(), kappa)
    }

    /// Full 2x2 matrix of `A = kappa g` at a node (1D pads with zeros).
    pub fn a_at(&self, node: usize) -> [[f64; 2]; 2] {
        let k = self.kappa[node];
        let packed = packed_len(self.grid.dim());
        let b = &self.base[node * packed..(node + 1) * packed];
        match self.grid.dim() {
            1 => [[k * b[0], 0.0], [0.0, 0.0]],
            _ => [[k * b[0], k * b[1]], [k * b[1], k * b[2]]],
        }
    }

    /// Base matrix `g` at a node, without the conformal factor.
    pub fn base_at(&self, node: usize) -> [[f64; 2]; 2] {
        let packed = packed_len(self.grid.dim());
        let b = &self.base[node * packed..(node + 1) * packed];
        match self.grid.dim() {
            1 => [[b[0], 0.0], [0.0, 0.0]],
            _ => [[b[0], b[1]], [b[1], b[2]]],
        }
    }

    /// `A p` at a node.
    pub fn apply_at(&self, node: usize, p: [f64; 2]) -> [f64; 2] {
        let a = self.a_at(node);
        [
            a[0][0] * p[0] + a[0][1] * p[1],
            a[1][0] * p[0] + a[1][1] * p[1],
        ]
    }

    /// `g p` (base only) at a node.
    pub fn apply_base_at(&self, node: usize, p: [f64; 2]) -> [f64; 2] {
        let g = self.base_at(node);
        [
            g[0][0] * p[0] + g[0][1] * p[1],
            g[1][0] * p[0] + g[1][1] * p[1],
        ]
    }

    /// `p^T A r` at a node.
    pub fn quadratic_at(&self, node: usize, p: [f64; 2], r: [f64; 2]) -> f64 {
        let ap = self.apply_at(node, r);
        p[0] * ap[0] + p[1] * ap[1]
    }

    /// `A v` as a vector field.
    pub fn apply(&self, v: &VectorField) -> VectorField {
        assert!(self.grid.same_layout(v.grid()));
        VectorField::from_indexed_fn(self.grid.clone(), |node| self.apply_at(node, v.at(node)))
    }

    /// `g v` (base only) as a vector field.
    pub fn apply_base(&self, v: &VectorField) -> VectorField {
        assert!(self.grid.same_layout(v.grid()));
        VectorField::from_indexed_fn(self.grid.clone(), |node| {
            self.apply_base_at(node, v.at(node))
        })
    }
}
