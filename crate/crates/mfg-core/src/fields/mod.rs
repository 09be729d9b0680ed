//! Lattice geometry, field containers, and discrete calculus.

pub mod field;
pub mod grid;
pub mod metric;
pub mod ops;
pub mod stencil;

pub use field::{
    BoundaryData, BoundaryKind, ComplexBoundaryData, ComplexSpaceTimeField, ScalarField,
    SpaceTimeField, VectorField,
};
pub use grid::{Face, Grid, Line};
pub use metric::MetricField;
