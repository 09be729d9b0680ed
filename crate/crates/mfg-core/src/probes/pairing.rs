//! Pairing functionals built from probe pairs.
//!
//! With `w = exp(psi)(a + z_w)` and `v = exp(-psi)(b + z_v)`, the weighted
//! volume pairing against a drift difference `dq` is
//!
//! ```text
//! P = int_Q w (dq . grad v)
//!   = int_Q (a + z_w) dq . [ grad(b + z_v) - rho zeta (b + z_v) ],
//! ```
//!
//! where the exponentials have cancelled analytically.  As `rho` grows,
//!
//! ```text
//! P / (-rho) -> c_hat(tau) *  int_Omega (dq . zeta) exp(-i x . xi) dx,
//! c_hat(tau) = int chi^2(t) exp(-i t tau) dt,
//! ```
//!
//! so normalized pairings read off Fourier data of the ray component of
//! `dq`.  The boundary (Born) form replaces the unknown volume integral by
//! measured flux defects of the conjugated response and agrees with the
//! volume form up to terms quadratic in `dq`.

use num_complex::Complex64;

use super::cgo::{forward_amplitude_at, time_window, CgoParams};
use super::remainder::ProbePair;
use crate::fields::{ops, BoundaryData, Grid, VectorField};

/// `c_hat(tau)` under the grid's time quadrature — the same rule the
/// pairings use, so normalization cancels quadrature bias.
pub fn window_transform(grid: &Grid, params: &CgoParams) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for level in 0..grid.levels() {
        let t = grid.t(level);
        let chi = time_window(t, params.window);
        acc += Complex64::new(0.0, -params.tau * t).exp() * (chi * chi * grid.time_weight(level));
    }
    acc
}

/// The limit functional evaluated directly from the amplitude product:
/// `-rho int_Q chi^2 exp(-i(x . xi + t tau)) (dq . zeta)`.
pub fn leading_term_pairing(grid: &Grid, params: &CgoParams, dq: &VectorField) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for level in 0..grid.levels() {
        let t = grid.t(level);
        let chi = time_window(t, params.window);
        if chi == 0.0 {
            continue;
        }
        let tw = grid.time_weight(level);
        for node in 0..grid.n_nodes() {
            let x = grid.coords(node);
            let q = dq.at(node);
            let ray = q[0] * params.zeta[0] + q[1] * params.zeta[1];
            let phase = x[0] * params.xi[0] + x[1] * params.xi[1] + t * params.tau;
            acc += Complex64::new(0.0, -phase).exp() * (chi * chi * ray * grid.weight(node) * tw);
        }
    }
    acc * (-params.rho)
}

/// Full volume pairing `int_Q (a + z_w) dq . [grad(b + z_v) - rho zeta (b + z_v)]`.
pub fn volume_pairing(pair: &ProbePair, dq: &VectorField) -> Complex64 {
    let amps = &pair.amplitudes;
    let params = &amps.params;
    let grid = amps.envelope.grid();
    let n = grid.n_nodes();
    let dim = grid.dim();
    let mut grad = vec![vec![0.0; n]; dim];
    let mut v_level = vec![0.0; n];
    let mut acc = Complex64::new(0.0, 0.0);
    for level in 0..grid.levels() {
        let tw = grid.time_weight(level);
        let b = amps.backward.level(level);
        let zv = pair.backward_remainder.level(level);
        for node in 0..n {
            v_level[node] = b[node] + zv[node];
        }
        ops::gradient_slices(grid, &v_level, &mut grad);
        let a_re = amps.forward.re.level(level);
        let a_im = amps.forward.im.level(level);
        let zw_re = pair.forward_remainder.re.level(level);
        let zw_im = pair.forward_remainder.im.level(level);
        for node in 0..n {
            let q = dq.at(node);
            let mut transported = [0.0f64; 2];
            transported[0] = grad[0][node] - params.rho * params.zeta[0] * v_level[node];
            if dim == 2 {
                transported[1] = grad[1][node] - params.rho * params.zeta[1] * v_level[node];
            }
            let real_part = q[0] * transported[0] + q[1] * transported[1];
            let w = Complex64::new(a_re[node] + zw_re[node], a_im[node] + zw_im[node]);
            acc += w * (real_part * grid.weight(node) * tw);
        }
    }
    acc
}

/// Boundary (Born) pairing: `sum_Sigma (a + z_w) * flux_defect` with the
/// surface-time quadrature.  `flux_defect` holds the normal derivative of
/// the conjugated response minus the background probe.
pub fn born_pairing(pair: &ProbePair, flux_defect: &BoundaryData) -> Complex64 {
    let amps = &pair.amplitudes;
    let grid = amps.envelope.grid();
    let sw = grid.sigma_weights();
    let mut acc = Complex64::new(0.0, 0.0);
    for level in 0..grid.levels() {
        let t = grid.t(level);
        let tw = grid.time_weight(level);
        let defect = flux_defect.level(level);
        for (pos, &node) in grid.sigma_nodes().iter().enumerate() {
            let a = forward_amplitude_at(&amps.params, &amps.envelope, node, t);
            let zw = Complex64::new(
                pair.forward_remainder.re.at(node, level),
                pair.forward_remainder.im.at(node, level),
            );
            acc += (a + zw) * (defect[pos] * sw[pos] * tw);
        }
    }
    acc
}

/// Eliminate the `1/rho` correction from two normalized pairings:
/// given `p(rho) = A + B/rho` at two values, return `A`.
pub fn richardson_in_rho(rho_small: f64, p_small: Complex64, rho_large: f64, p_large: Complex64) -> Complex64 {
    (p_large * rho_large - p_small * rho_small) / (rho_large - rho_small)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use crate::probes::cgo::build_amplitudes;
    use crate::probes::remainder::{conjugated_backward_response, solve_probe_pair};
    use crate::reference::dft;
    use std::f64::consts::TAU;

    #[test]
    fn leading_term_reads_off_fourier_coefficients() {
        // Band-limited ray component + lattice frequency: the normalized
        // leading pairing must match the discrete Fourier coefficient.
        let grid = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [33, 33], 0.25, 16).unwrap();
        let dq = VectorField::from_fn(grid.clone(), |x| {
            [0.0, 0.3 * (TAU * x[0]).cos() + 0.1 * (2.0 * TAU * x[0]).sin()]
        });
        let params = CgoParams {
            zeta: [0.0, 1.0],
            xi: [TAU, 0.0],
            tau: 0.0,
            rho: 8.0,
            window: (0.05, 0.2),
        }
        .validated(&grid)
        .unwrap();
        let pairing = leading_term_pairing(&grid, &params, &dq);
        let estimate = pairing / (-params.rho * window_transform(&grid, &params));
        // Samples of dq . zeta along the x-axis (constant in y), one row.
        let samples: Vec<f64> = (0..32)
            .map(|i| {
                let x = i as f64 / 32.0;
                0.3 * (TAU * x).cos() + 0.1 * (2.0 * TAU * x).sin()
            })
            .collect();
        let spectrum = dft(&samples);
        // int dq_zeta e^{-i 2 pi x} dx = spectrum[1] / N for unit length.
        let reference = Complex64::new(spectrum[1].0, spectrum[1].1) / 32.0;
        assert!(
            (estimate - reference).norm() < 0.02 * reference.norm().max(1e-12),
            "estimate {estimate} vs dft {reference}"
        );
    }

    #[test]
    fn born_and_volume_pairings_agree_for_small_contrast() {
        // True drift = guess + small dq.  The Born boundary functional and
        // the volume functional differ only at second order in dq.
        let grid = Grid::new_1d(0.0, 1.0, 65, 0.25, 64).unwrap();
        let guess = VectorField::from_fn(grid.clone(), |x| [0.3 + 0.2 * x[0], 0.0]);
        let amp = 0.02;
        let dq = VectorField::from_fn(grid.clone(), |x| {
            [amp * (TAU * x[0]).sin().powi(2), 0.0]
        });
        let mut truth = guess.clone();
        truth.axpy(1.0, &dq);
        let params = CgoParams {
            zeta: [1.0, 0.0],
            xi: [0.0, 0.0],
            tau: 0.0,
            rho: 8.0,
            window: (0.05, 0.2),
        };
        let amps = build_amplitudes(&grid, &guess, params).unwrap();
        let data = ops::trace(&amps.backward);
        let pair = solve_probe_pair(&grid, &guess, amps).unwrap();
        let y = conjugated_backward_response(&grid, &truth, &pair.amplitudes.params, &data).unwrap();
        let mut background = pair.amplitudes.backward.clone();
        background.axpy(1.0, &pair.backward_remainder);
        let flux_y = ops::normal_derivative(&y);
        let flux_bg = ops::normal_derivative(&background);
        let mut defect = flux_y;
        defect.axpy(-1.0, &flux_bg);
        let born = born_pairing(&pair, &defect);
        let volume = volume_pairing(&pair, &dq);
        let rel = (born - volume).norm() / volume.norm();
        assert!(
            rel < 0.05,
            "born {born} vs volume {volume} (relative {rel})"
        );
    }
}
