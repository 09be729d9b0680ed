//! Lattice field containers.
//!
//! All containers share an `Arc<Grid>` and validate length and finiteness on
//! construction.  Space-time values are stored level-major (time level is the
//! slowest index) so that a single level is a contiguous slice.  Complex
//! fields are carried as flagged pairs of real fields.

use super::grid::Grid;
use crate::error::FieldError;
use std::sync::Arc;

pub(crate) fn check_finite(values: &[f64]) -> Result<(), FieldError> {
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(FieldError::NonFinite { index: i, value: v });
        }
    }
    Ok(())
}

/// Real scalar values on the spatial lattice.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.n_nodes() {
            return Err(FieldError::LengthMismatch {
                got: values.len(),
                expected: grid.n_nodes(),
            });
        }
        check_finite(&values)?;
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let n = grid.n_nodes();
        ScalarField {
            grid,
            values: vec![value; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.n_nodes()).map(|i| f(grid.coords(i))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(
            self.grid.same_layout(other.grid()),
            "zip_with on mismatched grids"
        );
        ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &ScalarField) {
        assert!(self.grid.same_layout(other.grid()), "axpy grid mismatch");
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        assert!(self.grid.same_layout(other.grid()));
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// Real vector values on the spatial lattice, stored per component.
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<Grid>,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, comps: Vec<Vec<f64>>) -> Result<Self, FieldError> {
        if comps.len() != grid.dim() {
            return Err(FieldError::LengthMismatch {
                got: comps.len(),
                expected: grid.dim(),
            });
        }
        for c in &comps {
            if c.len() != grid.n_nodes() {
                return Err(FieldError::LengthMismatch {
                    got: c.len(),
                    expected: grid.n_nodes(),
                });
            }
            check_finite(c)?;
        }
        Ok(VectorField { grid, comps })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_nodes();
        let dim = grid.dim();
        VectorField {
            grid,
            comps: vec![vec![0.0; n]; dim],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let n = grid.n_nodes();
        let dim = grid.dim();
        let mut comps = vec![vec![0.0; n]; dim];
        for node in 0..n {
            let v = f(grid.coords(node));
            for (a, comp) in comps.iter_mut().enumerate() {
                comp[node] = v[a];
            }
        }
        VectorField { grid, comps }
    }

    /// Like [`VectorField::from_fn`] but the closure receives the flat node
    /// index instead of coordinates.
    pub fn from_indexed_fn(grid: Arc<Grid>, f: impl Fn(usize) -> [f64; 2]) -> Self {
        let n = grid.n_nodes();
        let dim = grid.dim();
        let mut comps = vec![vec![0.0; n]; dim];
        for node in 0..n {
            let v = f(node);
            for (a, comp) in comps.iter_mut().enumerate() {
                comp[node] = v[a];
            }
        }
        VectorField { grid, comps }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn comp_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    #[inline]
    pub fn at(&self, node: usize) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (a, comp) in self.comps.iter().enumerate() {
            v[a] = comp[node];
        }
        v
    }

    pub fn axpy(&mut self, c: f64, other: &VectorField) {
        assert!(self.grid.same_layout(other.grid()));
        for (mine, theirs) in self.comps.iter_mut().zip(&other.comps) {
            for (a, &b) in mine.iter_mut().zip(theirs) {
                *a += c * b;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for comp in &mut self.comps {
            for v in comp.iter_mut() {
                *v *= c;
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &VectorField) -> f64 {
        assert!(self.grid.same_layout(other.grid()));
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .fold(0.0, |m, (&x, &y)| m.max((x - y).abs()))
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let n = self.grid.n_nodes();
        let mut out = vec![0.0; n];
        for comp in &self.comps {
            for (o, &v) in out.iter_mut().zip(comp) {
                *o += v * v;
            }
        }
        for o in &mut out {
            *o = o.sqrt();
        }
        ScalarField {
            grid: self.grid.clone(),
            values: out,
        }
    }

    /// Pointwise dot product with another vector field.
    pub fn dot(&self, other: &VectorField) -> ScalarField {
        assert!(self.grid.same_layout(other.grid()));
        let n = self.grid.n_nodes();
        let mut out = vec![0.0; n];
        for (a, b) in self.comps.iter().zip(&other.comps) {
            for i in 0..n {
                out[i] += a[i] * b[i];
            }
        }
        ScalarField {
            grid: self.grid.clone(),
            values: out,
        }
    }

    /// Pointwise product with a scalar field.
    pub fn mul_scalar(&self, s: &ScalarField) -> VectorField {
        assert!(self.grid.same_layout(s.grid()));
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(s.values()).map(|(&v, &m)| v * m).collect())
            .collect();
        VectorField {
            grid: self.grid.clone(),
            comps,
        }
    }
}

/// Real scalar values on lattice x time levels, level-major.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, FieldError> {
        let expected = grid.n_nodes() * grid.levels();
        if values.len() != expected {
            return Err(FieldError::LengthMismatch {
                got: values.len(),
                expected,
            });
        }
        check_finite(&values)?;
        Ok(SpaceTimeField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let len = grid.n_nodes() * grid.levels();
        SpaceTimeField {
            grid,
            values: vec![0.0; len],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_nodes() * grid.levels());
        for level in 0..grid.levels() {
            let t = grid.t(level);
            for node in 0..grid.n_nodes() {
                values.push(f(grid.coords(node), t));
            }
        }
        SpaceTimeField { grid, values }
    }

    /// Constant-in-time extension of a spatial field.
    pub fn extend(field: &ScalarField) -> Self {
        let grid = field.grid().clone();
        let mut values = Vec::with_capacity(grid.n_nodes() * grid.levels());
        for _ in 0..grid.levels() {
            values.extend_from_slice(field.values());
        }
        SpaceTimeField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.values[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.n_nodes();
        &mut self.values[k * n..(k + 1) * n]
    }

    pub fn level_field(&self, k: usize) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.level(k).to_vec(),
        }
    }

    pub fn set_level(&mut self, k: usize, values: &[f64]) {
        assert_eq!(values.len(), self.grid.n_nodes());
        self.level_mut(k).copy_from_slice(values);
    }

    #[inline]
    pub fn at(&self, node: usize, level: usize) -> f64 {
        self.values[level * self.grid.n_nodes() + node]
    }

    pub fn axpy(&mut self, c: f64, other: &SpaceTimeField) {
        assert!(self.grid.same_layout(other.grid()));
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &SpaceTimeField) -> f64 {
        assert!(self.grid.same_layout(other.grid()));
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// Which boundary quantity a [`BoundaryData`] record holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Trace,
    NormalDerivative,
}

/// Values on the boundary node set across time levels, level-major.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    grid: Arc<Grid>,
    kind: BoundaryKind,
    values: Vec<f64>,
}

impl BoundaryData {
    pub fn new(grid: Arc<Grid>, kind: BoundaryKind, values: Vec<f64>) -> Result<Self, FieldError> {
        let expected = grid.sigma_len() * grid.levels();
        if values.len() != expected {
            return Err(FieldError::LengthMismatch {
                got: values.len(),
                expected,
            });
        }
        check_finite(&values)?;
        Ok(BoundaryData { grid, kind, values })
    }

    pub fn zeros(grid: Arc<Grid>, kind: BoundaryKind) -> Self {
        let len = grid.sigma_len() * grid.levels();
        BoundaryData {
            grid,
            kind,
            values: vec![0.0; len],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, kind: BoundaryKind, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.sigma_len() * grid.levels());
        for level in 0..grid.levels() {
            let t = grid.t(level);
            for &node in grid.sigma_nodes() {
                values.push(f(grid.coords(node), t));
            }
        }
        BoundaryData { grid, kind, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn level(&self, k: usize) -> &[f64] {
        let m = self.grid.sigma_len();
        &self.values[k * m..(k + 1) * m]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let m = self.grid.sigma_len();
        &mut self.values[k * m..(k + 1) * m]
    }

    /// Value at a boundary node (by flat node index) and level.
    pub fn at_node(&self, node: usize, level: usize) -> f64 {
        let pos = self
            .grid
            .sigma_pos(node)
            .expect("node is not on the boundary");
        self.values[level * self.grid.sigma_len() + pos]
    }

    pub fn at_pos(&self, pos: usize, level: usize) -> f64 {
        self.values[level * self.grid.sigma_len() + pos]
    }

    pub fn axpy(&mut self, c: f64, other: &BoundaryData) {
        assert!(self.grid.same_layout(other.grid()));
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &BoundaryData) -> f64 {
        assert!(self.grid.same_layout(other.grid()));
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Root-mean-square over all boundary slots and levels.
    pub fn rms(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s / self.values.len() as f64).sqrt()
    }
}

/// Complex space-time field as a flagged pair of real fields.
#[derive(Debug, Clone)]
pub struct ComplexSpaceTimeField {
    pub re: SpaceTimeField,
    pub im: SpaceTimeField,
}

impl ComplexSpaceTimeField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        ComplexSpaceTimeField {
            re: SpaceTimeField::zeros(grid.clone()),
            im: SpaceTimeField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.re.grid()
    }

    /// Pointwise magnitude-squared integrated with the space-time trapezoid
    /// rule, then rooted: the `L^2(Q)` norm.
    pub fn l2_norm(&self) -> f64 {
        let grid = self.re.grid();
        let mut acc = 0.0;
        for level in 0..grid.levels() {
            let wt = grid.time_weight(level);
            let re = self.re.level(level);
            let im = self.im.level(level);
            for node in 0..grid.n_nodes() {
                let w = grid.weight(node) * wt;
                acc += w * (re[node] * re[node] + im[node] * im[node]);
            }
        }
        acc.sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.re
            .values()
            .iter()
            .zip(self.im.values())
            .fold(0.0, |m, (&a, &b)| m.max((a * a + b * b).sqrt()))
    }
}

/// Complex boundary record as a flagged pair of real records.
#[derive(Debug, Clone)]
pub struct ComplexBoundaryData {
    pub re: BoundaryData,
    pub im: BoundaryData,
}

impl ComplexBoundaryData {
    pub fn zeros(grid: Arc<Grid>, kind: BoundaryKind) -> Self {
        ComplexBoundaryData {
            re: BoundaryData::zeros(grid.clone(), kind),
            im: BoundaryData::zeros(grid, kind),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.re.grid()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::grid::Grid;

    #[test]
    fn construction_validates_shape_and_values() {
        let g = Grid::new_1d(0.0, 1.0, 9, 1.0, 4).unwrap();
        assert!(ScalarField::new(g.clone(), vec![0.0; 8]).is_err());
        assert!(ScalarField::new(g.clone(), vec![f64::NAN; 9]).is_err());
        assert!(ScalarField::new(g.clone(), vec![1.0; 9]).is_ok());
        // Space-time length is nodes * (n_time + 1).
        assert!(SpaceTimeField::new(g.clone(), vec![0.0; 9 * 5]).is_ok());
        assert!(SpaceTimeField::new(g.clone(), vec![0.0; 9 * 4]).is_err());
        assert!(BoundaryData::new(g.clone(), BoundaryKind::Trace, vec![0.0; 2 * 5]).is_ok());
    }

    #[test]
    fn levels_are_contiguous() {
        let g = Grid::new_1d(0.0, 1.0, 5, 2.0, 2).unwrap();
        let f = SpaceTimeField::from_fn(g.clone(), |x, t| x[0] + 10.0 * t);
        assert_eq!(f.level(0)[0], 0.0);
        assert!((f.level(1)[2] - (0.5 + 10.0)).abs() < 1e-15);
        assert!((f.at(4, 2) - (1.0 + 20.0)).abs() < 1e-15);
    }

    #[test]
    fn extend_is_constant_in_time() {
        let g = Grid::new_1d(0.0, 1.0, 5, 1.0, 3).unwrap();
        let base = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]);
        let ext = SpaceTimeField::extend(&base);
        for k in 0..g.levels() {
            assert_eq!(ext.level(k), base.values());
        }
    }
}
