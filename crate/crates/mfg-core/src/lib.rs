//! Numerical laboratory for quadratic mean-field games on box domains.
//!
//! The crate covers the full loop from coefficients to measurements and back:
//!
//! * [`fields`] — lattice geometry, field containers, discrete calculus with
//!   an exact summation-by-parts boundary form;
//! * [`forward`] — stationary solves, the coupled time-dependent system, and
//!   boundary measurement extraction;
//! * [`linearize`] — the cascade of multi-linear perturbation systems driven
//!   by boundary data at successive orders;
//! * [`probes`] — oscillatory exponential solutions with controlled
//!   remainders, used to pair against interior quantities from the boundary;
//! * [`inverse`] — reconstruction of the drift, the stationary pair, the
//!   kinetic conformal factor, and the cost expansion from boundary records;
//! * [`linalg`] — banded LU and regularized least squares;
//! * [`io`] / [`config`] — deterministic artifacts and run description.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod fields;
pub mod forward;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod linearize;
pub mod probes;
pub mod reference;
