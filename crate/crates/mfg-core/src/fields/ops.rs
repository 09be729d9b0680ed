//! Differential operators and quadrature functionals on lattice fields.
//!
//! ```text
//! gradient   f        -> (D_1 f, ..., D_d f)         second order everywhere
//! divergence v        -> sum_a D_a v_a               same rows as gradient
//! laplacian  f        -> sum_a D_a^2 f               exact on quadratics
//! ```
//!
//! Because divergence reuses the gradient rows, the discrete integration by
//! parts `<grad f, v> + <f, div v> = boundary_flux(f, v)` holds to rounding,
//! where [`boundary_flux`] is the exact bilinear compensator of the rows under
//! the trapezoid inner product.  That functional is supported on a three-node
//! collar of the boundary and reproduces the continuum flux integral of
//! `f v . nu` to second order.

use super::field::{BoundaryData, BoundaryKind, ScalarField, SpaceTimeField, VectorField};
use super::grid::Grid;
use super::metric::MetricField;
use super::stencil;

/// Per-axis first derivative of a raw level slice, written into `out[axis]`.
pub(crate) fn gradient_slices(grid: &Grid, values: &[f64], out: &mut [Vec<f64>]) {
    for axis in 0..grid.dim() {
        let comp = &mut out[axis];
        debug_assert_eq!(comp.len(), values.len());
        let h = grid.h()[axis];
        for line in grid.lines(axis) {
            stencil::apply_d1(values, comp, line.start, line.stride, line.len, h);
        }
    }
}

/// Second-order gradient with one-sided boundary closures.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid().clone();
    let mut comps = vec![vec![0.0; grid.n_nodes()]; grid.dim()];
    gradient_slices(&grid, f.values(), &mut comps);
    VectorField::new(grid, comps).expect("gradient output is well-formed")
}

/// Gradient of one time level of a space-time field.
pub fn gradient_at_level(f: &SpaceTimeField, level: usize) -> VectorField {
    let grid = f.grid().clone();
    let mut comps = vec![vec![0.0; grid.n_nodes()]; grid.dim()];
    gradient_slices(&grid, f.level(level), &mut comps);
    VectorField::new(grid, comps).expect("gradient output is well-formed")
}

/// Divergence with the same derivative rows as [`gradient`], applied per
/// component; exact on affine fields.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid().clone();
    let n = grid.n_nodes();
    let mut out = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for axis in 0..grid.dim() {
        let h = grid.h()[axis];
        for line in grid.lines(axis) {
            stencil::apply_d1(v.comp(axis), &mut tmp, line.start, line.stride, line.len, h);
        }
        for i in 0..n {
            out[i] += tmp[i];
        }
    }
    ScalarField::new(grid, out).expect("divergence output is well-formed")
}

/// Direct second-derivative Laplacian (not the gradient/divergence
/// composition); exact on quadratics, second order at the boundary.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid().clone();
    let mut out = vec![0.0; grid.n_nodes()];
    laplacian_slice(&grid, f.values(), &mut out);
    ScalarField::new(grid, out).expect("laplacian output is well-formed")
}

pub(crate) fn laplacian_slice(grid: &Grid, values: &[f64], out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for axis in 0..grid.dim() {
        let h = grid.h()[axis];
        for line in grid.lines(axis) {
            stencil::accumulate_d2(values, out, line.start, line.stride, line.len, h);
        }
    }
}

/// Restriction of a space-time field to the boundary node set.
pub fn trace(f: &SpaceTimeField) -> BoundaryData {
    let grid = f.grid().clone();
    let mut values = Vec::with_capacity(grid.sigma_len() * grid.levels());
    for level in 0..grid.levels() {
        let slice = f.level(level);
        for &node in grid.sigma_nodes() {
            values.push(slice[node]);
        }
    }
    BoundaryData::new(grid, BoundaryKind::Trace, values).expect("trace output is well-formed")
}

/// Restriction of a spatial field to the boundary node set (single level).
pub fn trace_scalar(f: &ScalarField) -> Vec<f64> {
    f.grid().sigma_nodes().iter().map(|&n| f.at(n)).collect()
}

/// Outward normal derivative on the boundary node set, using the one-sided
/// gradient closures; at two-dimensional corners the averaged diagonal normal
/// is used.
pub fn normal_derivative(f: &SpaceTimeField) -> BoundaryData {
    let grid = f.grid().clone();
    let mut comps = vec![vec![0.0; grid.n_nodes()]; grid.dim()];
    let mut values = Vec::with_capacity(grid.sigma_len() * grid.levels());
    for level in 0..grid.levels() {
        gradient_slices(&grid, f.level(level), &mut comps);
        for &node in grid.sigma_nodes() {
            let nu = grid.outward_normal(node);
            let mut d = 0.0;
            for (axis, comp) in comps.iter().enumerate() {
                d += nu[axis] * comp[node];
            }
            values.push(d);
        }
    }
    BoundaryData::new(grid, BoundaryKind::NormalDerivative, values)
        .expect("normal derivative output is well-formed")
}

/// Normal derivative of a single spatial field, ordered like `sigma_nodes`.
pub fn normal_derivative_scalar(f: &ScalarField) -> Vec<f64> {
    let grid = f.grid();
    let grad = gradient(f);
    grid.sigma_nodes()
        .iter()
        .map(|&node| {
            let nu = grid.outward_normal(node);
            let g = grad.at(node);
            nu[0] * g[0] + nu[1] * g[1]
        })
        .collect()
}

/// Pointwise `p^T A r` for the effective metric `A = kappa g`.
pub fn quadratic_form(a: &MetricField, p: &VectorField, r: &VectorField) -> ScalarField {
    assert!(a.grid().same_layout(p.grid()) && a.grid().same_layout(r.grid()));
    let grid = a.grid().clone();
    let n = grid.n_nodes();
    let mut out = vec![0.0; n];
    for node in 0..n {
        out[node] = a.quadratic_at(node, p.at(node), r.at(node));
    }
    ScalarField::new(grid, out).expect("quadratic form output is well-formed")
}

/// Trapezoid inner product over the spatial box.
pub fn inner_product(f: &ScalarField, g: &ScalarField) -> f64 {
    assert!(f.grid().same_layout(g.grid()));
    let grid = f.grid();
    (0..grid.n_nodes())
        .map(|i| grid.weight(i) * f.at(i) * g.at(i))
        .sum()
}

/// Trapezoid inner product of two vector fields (sum over components).
pub fn inner_product_vec(v: &VectorField, w: &VectorField) -> f64 {
    assert!(v.grid().same_layout(w.grid()));
    let grid = v.grid();
    let mut acc = 0.0;
    for axis in 0..grid.dim() {
        let a = v.comp(axis);
        let b = w.comp(axis);
        for i in 0..grid.n_nodes() {
            acc += grid.weight(i) * a[i] * b[i];
        }
    }
    acc
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    inner_product(f, f).sqrt()
}

pub fn l2_norm_vec(v: &VectorField) -> f64 {
    inner_product_vec(v, v).sqrt()
}

/// Space-time trapezoid inner product over the cylinder.
pub fn st_inner_product(f: &SpaceTimeField, g: &SpaceTimeField) -> f64 {
    assert!(f.grid().same_layout(g.grid()));
    let grid = f.grid();
    let mut acc = 0.0;
    for level in 0..grid.levels() {
        let wt = grid.time_weight(level);
        let a = f.level(level);
        let b = g.level(level);
        for node in 0..grid.n_nodes() {
            acc += wt * grid.weight(node) * a[node] * b[node];
        }
    }
    acc
}

pub fn st_l2_norm(f: &SpaceTimeField) -> f64 {
    st_inner_product(f, f).sqrt()
}

/// Exact compensator of the discrete integration by parts:
///
/// ```text
/// <grad f, v>_W + <f, div v>_W = boundary_flux(f, v)      (to rounding)
/// ```
///
/// Evaluated from closed-form corner blocks per lattice line, not by summing
/// the left-hand side, so equality with the inner-product route is a genuine
/// consistency check.  Approximates the continuum integral of `f v . nu` over
/// the boundary to second order.
pub fn boundary_flux(f: &ScalarField, v: &VectorField) -> f64 {
    assert!(f.grid().same_layout(v.grid()));
    let grid = f.grid();
    let mut acc = 0.0;
    for axis in 0..grid.dim() {
        for line in grid.lines(axis) {
            acc += line.transverse_weight
                * stencil::line_boundary_form(
                    f.values(),
                    v.comp(axis),
                    line.start,
                    line.stride,
                    line.len,
                );
        }
    }
    acc
}

/// Relative `L^2` distance `|a - b| / max(|b|, floor)`.
pub fn relative_l2_error(a: &ScalarField, b: &ScalarField) -> f64 {
    assert!(a.grid().same_layout(b.grid()));
    let diff = a.zip_with(b, |x, y| x - y);
    let denom = l2_norm(b).max(1e-300);
    l2_norm(&diff) / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::grid::Grid;
    use std::f64::consts::PI;

    fn grid_1d(n: usize) -> std::sync::Arc<Grid> {
        Grid::new_1d(0.0, 1.0, n, 1.0, 4).unwrap()
    }

    #[test]
    fn gradient_exact_on_affine() {
        let g = grid_1d(17);
        let f = ScalarField::from_fn(g.clone(), |x| 3.0 - 2.5 * x[0]);
        let grad = gradient(&f);
        let tol = 10.0 * f64::EPSILON * f.sup_norm() / g.h_min();
        for i in 0..g.n_nodes() {
            assert!((grad.comp(0)[i] + 2.5).abs() <= tol);
        }
    }

    #[test]
    fn gradient_second_order_on_sine() {
        // Max-norm error against pi cos(pi x) shrinks by ~4x when h halves.
        let err = |n: usize| -> f64 {
            let g = grid_1d(n);
            let f = ScalarField::from_fn(g.clone(), |x| (PI * x[0]).sin());
            let grad = gradient(&f);
            (0..g.n_nodes())
                .map(|i| (grad.comp(0)[i] - PI * (PI * g.coords(i)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let e65 = err(65);
        let e129 = err(129);
        let ratio = e65 / e129;
        assert!(
            (ratio - 4.0).abs() <= 0.6,
            "expected ~4x error reduction, got {ratio}"
        );
    }

    #[test]
    fn divergence_of_constant_vanishes() {
        let g = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [9, 9], 1.0, 4).unwrap();
        let v = VectorField::from_fn(g.clone(), |_| [2.0, -7.0]);
        let div = divergence(&v);
        assert!(div.sup_norm() <= 1e-13);
    }

    #[test]
    fn divergence_exact_on_identity_field() {
        let g = Grid::new_2d([[0.0, 1.0], [0.0, 2.0]], [9, 11], 1.0, 4).unwrap();
        let v = VectorField::from_fn(g.clone(), |x| [x[0], x[1]]);
        let div = divergence(&v);
        for i in 0..g.n_nodes() {
            assert!((div.at(i) - 2.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn laplacian_exact_on_quadratics() {
        let g = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [9, 9], 1.0, 4).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| {
            x[0] * x[0] + 0.5 * x[1] * x[1] + x[0] * x[1] - x[0]
        });
        let lap = laplacian(&f);
        let tol = 10.0 * f64::EPSILON * f.sup_norm() / (g.h_min() * g.h_min());
        for i in 0..g.n_nodes() {
            assert!((lap.at(i) - 3.0).abs() <= tol, "node {i}: {}", lap.at(i));
        }
    }

    #[test]
    fn normal_derivative_of_linear_field() {
        let g = grid_1d(9);
        let a = 4.2;
        let f = SpaceTimeField::from_fn(g.clone(), |x, _| a * x[0]);
        let nd = normal_derivative(&f);
        // Left end: nu = -1 so the outward derivative is -a; right end +a.
        for level in 0..g.levels() {
            assert!((nd.at_node(0, level) + a).abs() < 1e-12);
            assert!((nd.at_node(8, level) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_derivative_second_order_on_sine() {
        let value_at = |n: usize| -> f64 {
            let g = grid_1d(n);
            let f = SpaceTimeField::from_fn(g.clone(), |x, _| (PI * x[0]).sin());
            normal_derivative(&f).at_node(0, 0)
        };
        // Outward normal at x = 0 is -1, so the exact value is -pi.
        let e33 = (value_at(33) + PI).abs();
        let e65 = (value_at(65) + PI).abs();
        assert!(e33 / e65 > 3.2 && e33 / e65 < 4.8, "ratio {}", e33 / e65);
    }

    #[test]
    fn integration_by_parts_is_exact_1d() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let g = grid_1d(33);
        for _ in 0..10 {
            let f = ScalarField::new(
                g.clone(),
                (0..g.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let v = VectorField::new(
                g.clone(),
                vec![(0..g.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect()],
            )
            .unwrap();
            let lhs = inner_product_vec(&gradient(&f), &v)
                + inner_product(&f, &divergence(&v));
            let flux = boundary_flux(&f, &v);
            let scale = lhs.abs() + flux.abs() + 1.0;
            assert!(
                (lhs - flux).abs() <= 10.0 * f64::EPSILON * scale / g.h_min(),
                "ibp defect {:.3e}",
                (lhs - flux).abs()
            );
        }
    }

    #[test]
    fn integration_by_parts_is_exact_2d() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let g = Grid::new_2d([[0.0, 1.0], [0.0, 1.5]], [12, 9], 1.0, 4).unwrap();
        for _ in 0..6 {
            let f = ScalarField::new(
                g.clone(),
                (0..g.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let v = VectorField::new(
                g.clone(),
                (0..2)
                    .map(|_| (0..g.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
            )
            .unwrap();
            let lhs = inner_product_vec(&gradient(&f), &v)
                + inner_product(&f, &divergence(&v));
            let flux = boundary_flux(&f, &v);
            let scale = lhs.abs() + flux.abs() + 1.0;
            assert!(
                (lhs - flux).abs() <= 10.0 * f64::EPSILON * scale / g.h_min(),
                "2d ibp defect {:.3e}",
                (lhs - flux).abs()
            );
        }
    }

    #[test]
    fn boundary_flux_approximates_continuum_flux() {
        // f = sin(pi x) cos(y), v = (x^2, x y): compare against the exact
        // line integral of f v . nu over the unit square boundary.
        let exact = {
            // On x=1: f v.nu = sin(pi) ... = 0. On x=0: v.nu = 0.
            // On y=0: v.nu = -x*0 = 0. On y=1: f v.nu = sin(pi x) cos(1) * x.
            let c: f64 = 1.0_f64.cos();
            // integral_0^1 x sin(pi x) dx = 1/pi
            c / PI
        };
        let flux_at = |n: usize| -> f64 {
            let g = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [n, n], 1.0, 4).unwrap();
            let f = ScalarField::from_fn(g.clone(), |x| (PI * x[0]).sin() * x[1].cos());
            let v = VectorField::from_fn(g.clone(), |x| [x[0] * x[0], x[0] * x[1]]);
            boundary_flux(&f, &v)
        };
        let e17 = (flux_at(17) - exact).abs();
        let e33 = (flux_at(33) - exact).abs();
        assert!(e33 < e17, "flux error should shrink under refinement");
        assert!(e33 < 4e-3, "flux error too large: {e33}");
    }
}
