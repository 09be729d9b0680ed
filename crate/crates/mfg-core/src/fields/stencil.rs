//! One-dimensional finite-difference rows shared by the field operators and
//! by every matrix assembly in the crate.
//!
//! Interior rows are the classic second-order central differences.  Boundary
//! rows use one-sided closures of the same order:
//!
//! ```text
//! f'(x_0)      ~ (-3 f_0 + 4 f_1 - f_2) / (2h)          exact on quadratics
//! f''(x_0)     ~ ( 2 f_0 - 5 f_1 + 4 f_2 - f_3) / h^2   exact on cubics
//! ```
//!
//! Keeping a single row table guarantees that residuals evaluated through the
//! public operators agree with the rows assembled into banded systems.

/// First-derivative row: up to three `(offset, coeff)` pairs relative to `i`.
#[inline]
pub fn d1_row(n: usize, i: usize, h: f64) -> [(isize, f64); 3] {
    debug_assert!(n >= 3 && i < n);
    let s = 1.0 / (2.0 * h);
    if i == 0 {
        [(0, -3.0 * s), (1, 4.0 * s), (2, -s)]
    } else if i == n - 1 {
        [(0, 3.0 * s), (-1, -4.0 * s), (-2, s)]
    } else {
        [(-1, -s), (1, s), (0, 0.0)]
    }
}

/// Second-derivative row: up to four `(offset, coeff)` pairs relative to `i`.
#[inline]
pub fn d2_row(n: usize, i: usize, h: f64) -> [(isize, f64); 4] {
    debug_assert!(n >= 4 && i < n);
    let s = 1.0 / (h * h);
    if i == 0 {
        [(0, 2.0 * s), (1, -5.0 * s), (2, 4.0 * s), (3, -s)]
    } else if i == n - 1 {
        [(0, 2.0 * s), (-1, -5.0 * s), (-2, 4.0 * s), (-3, -s)]
    } else {
        [(-1, s), (0, -2.0 * s), (1, s), (0, 0.0)]
    }
}

/// Applies the first-derivative rows along a strided line.
pub fn apply_d1(values: &[f64], out: &mut [f64], start: usize, stride: usize, len: usize, h: f64) {
    for i in 0..len {
        let mut acc = 0.0;
        for (off, c) in d1_row(len, i, h) {
            if c != 0.0 {
                let j = (i as isize + off) as usize;
                acc += c * values[start + j * stride];
            }
        }
        out[start + i * stride] = acc;
    }
}

/// Accumulates the second-derivative rows along a strided line into `out`.
pub fn accumulate_d2(
    values: &[f64],
    out: &mut [f64],
    start: usize,
    stride: usize,
    len: usize,
    h: f64,
) {
    for i in 0..len {
        let mut acc = 0.0;
        for (off, c) in d2_row(len, i, h) {
            if c != 0.0 {
                let j = (i as isize + off) as usize;
                acc += c * values[start + j * stride];
            }
        }
        out[start + i * stride] += acc;
    }
}

/// Corner blocks of the bilinear boundary form `B(f, v) = <Df, v> + <f, Dv>`
/// under the trapezoid inner product, for the rows above.  The form is exactly
/// supported on the first and last three nodes of a line:
///
/// ```text
/// B = sum_{i,j} M_ij f_i v_j,   M = H D + (H D)^T,
/// ```
///
/// with `H` the trapezoid weights and `D` the first-derivative rows; all
/// interior entries of `M` cancel.  The resulting functional is a
/// second-order-accurate quadrature of the continuum boundary flux
/// `f v nu` summed over the two line ends.
const M_LEFT: [[f64; 3]; 3] = [
    [-1.5, 0.5, -0.25],
    [0.5, 0.0, 0.0],
    [-0.25, 0.0, 0.0],
];
const M_RIGHT: [[f64; 3]; 3] = [
    [0.0, 0.0, 0.25],
    [0.0, 0.0, -0.5],
    [0.25, -0.5, 1.5],
];

/// Evaluates the boundary form for one strided line.
pub fn line_boundary_form(
    f: &[f64],
    v: &[f64],
    start: usize,
    stride: usize,
    len: usize,
) -> f64 {
    debug_assert!(len >= 4);
    let at = |vals: &[f64], i: usize| vals[start + i * stride];
    let mut acc = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            acc += M_LEFT[a][b] * at(f, a) * at(v, b);
            acc += M_RIGHT[a][b] * at(f, len - 3 + a) * at(v, len - 3 + b);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force `<Df, v> + <f, Dv>` under trapezoid weights for one line.
    fn boundary_form_reference(f: &[f64], v: &[f64], h: f64) -> f64 {
        let n = f.len();
        let w = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };
        let deriv = |vals: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            apply_d1(vals, &mut out, 0, 1, n, h);
            out
        };
        let df = deriv(f);
        let dv = deriv(v);
        (0..n).map(|i| w(i) * (df[i] * v[i] + f[i] * dv[i])).sum()
    }

    #[test]
    fn corner_blocks_match_assembled_form() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for &n in &[4usize, 5, 6, 9, 33] {
            let h = 1.0 / (n - 1) as f64;
            for _ in 0..20 {
                let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let fast = line_boundary_form(&f, &v, 0, 1, n);
                let slow = boundary_form_reference(&f, &v, h);
                assert!(
                    (fast - slow).abs() <= 1e-13 * (1.0 + slow.abs()),
                    "n={n}: corner form {fast} vs reference {slow}"
                );
            }
        }
    }

    #[test]
    fn boundary_form_exact_on_affine_products() {
        // f = v = x on [0, 1]: the continuum flux is x^2 v nu summed = 1.
        for &n in &[4usize, 7, 21] {
            let h = 1.0 / (n - 1) as f64;
            let x: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
            let got = line_boundary_form(&x, &x, 0, 1, n);
            assert!((got - 1.0).abs() < 1e-13, "n={n}: {got}");
            // Constants: flux of 1 * 1 over both ends cancels.
            let ones = vec![1.0; n];
            let got0 = line_boundary_form(&ones, &ones, 0, 1, n);
            assert!(got0.abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_rows_exact_on_polynomials() {
        let n = 12;
        let h = 0.37;
        let xs: Vec<f64> = (0..n).map(|i| 1.3 + i as f64 * h).collect();
        // d1 exact on quadratics everywhere (boundary closures included).
        let f: Vec<f64> = xs.iter().map(|&x| 2.0 - 3.0 * x + 0.5 * x * x).collect();
        let mut out = vec![0.0; n];
        apply_d1(&f, &mut out, 0, 1, n, h);
        for i in 0..n {
            let exact = -3.0 + xs[i];
            assert!((out[i] - exact).abs() < 1e-10, "d1 at {i}");
        }
        // d2 exact on cubics everywhere.
        let g: Vec<f64> = xs.iter().map(|&x| x * x * x - x).collect();
        let mut lap = vec![0.0; n];
        accumulate_d2(&g, &mut lap, 0, 1, n, h);
        for i in 0..n {
            let exact = 6.0 * xs[i];
            assert!((lap[i] - exact).abs() < 2e-9, "d2 at {i}: {} vs {exact}", lap[i]);
        }
    }
}
