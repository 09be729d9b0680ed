//! Geometric-optics probe parameters, window, and amplitudes.
//!
//! Probes ride an exponential weight `exp(psi)` with
//!
//! ```text
//! psi(x, t) = rho^2 t + rho zeta . x,      |zeta| = 1,
//! ```
//!
//! which exactly cancels between a forward-weighted and a backward-weighted
//! factor.  The weight itself is never materialized; everything is solved in
//! conjugated variables.  The amplitudes are
//!
//! ```text
//! a(x, t) = chi(t) exp(-i (x . xi + t tau)) E(x)      (forward)
//! b(x, t) = chi(t) / E(x)                             (backward)
//! E(x)    = exp( (1/2) int_0^exit  zeta . q(x + s zeta) ds ),
//! ```
//!
//! with `chi` a smooth bump in time and `xi` orthogonal to the ray direction
//! `zeta` (forced to zero in one dimension).  The ray ODE
//! `2 zeta . grad a + (zeta . q) a = 0` kills the order-`rho` terms of the
//! conjugated advection equation, and the product collapses to
//! `a b = chi^2 exp(-i (x . xi + t tau))` because the envelopes cancel.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::ProbeError;
use crate::fields::{ComplexSpaceTimeField, Grid, ScalarField, SpaceTimeField, VectorField};

/// Largest admissible value of `rho^2 T + rho diam`, keeping the implicit
/// exponential weight representable in `f64` with margin.
pub const EXPONENT_BUDGET: f64 = 650.0;

/// Parameters of one probe pair.
#[derive(Debug, Clone)]
pub struct CgoParams {
    /// Unit ray direction (second entry must vanish in one dimension).
    pub zeta: [f64; 2],
    /// Spatial frequency, orthogonal to `zeta`; zero in one dimension.
    pub xi: [f64; 2],
    /// Temporal frequency.
    pub tau: f64,
    /// Large parameter.
    pub rho: f64,
    /// Support `(start, end)` of the time window, in absolute time.
    pub window: (f64, f64),
}

impl CgoParams {
    /// Normalize the ray direction and check every admissibility condition
    /// against the grid.
    pub fn validated(mut self, grid: &Grid) -> Result<Self, ProbeError> {
        let norm = (self.zeta[0] * self.zeta[0] + self.zeta[1] * self.zeta[1]).sqrt();
        if norm < 1e-12 {
            return Err(ProbeError::ZeroDirection);
        }
        self.zeta[0] /= norm;
        self.zeta[1] /= norm;
        if !(self.rho > 0.0) {
            return Err(ProbeError::InvalidParams(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        let xi_len = (self.xi[0] * self.xi[0] + self.xi[1] * self.xi[1]).sqrt();
        if grid.dim() == 1 {
            if self.zeta[1].abs() > 1e-12 {
                return Err(ProbeError::InvalidParams(
                    "one-dimensional ray must point along the axis".into(),
                ));
            }
            if xi_len > 1e-12 {
                return Err(ProbeError::InvalidParams(
                    "spatial frequency must vanish in one dimension".into(),
                ));
            }
        } else {
            let dot = self.zeta[0] * self.xi[0] + self.zeta[1] * self.xi[1];
            if dot.abs() > 1e-10 * xi_len.max(1.0) {
                return Err(ProbeError::InvalidParams(format!(
                    "ray and spatial frequency must be orthogonal (dot {dot:.3e})"
                )));
            }
        }
        let (t0, t1) = self.window;
        if !(0.0 <= t0 && t0 < t1 && t1 <= grid.t_horizon()) {
            return Err(ProbeError::InvalidParams(format!(
                "time window ({t0}, {t1}) not inside [0, {}]",
                grid.t_horizon()
            )));
        }
        let required = self.rho * self.rho * grid.t_horizon() + self.rho * grid.diameter();
        if required > EXPONENT_BUDGET {
            return Err(ProbeError::OverflowRisk {
                required,
                budget: EXPONENT_BUDGET,
            });
        }
        Ok(self)
    }

    /// Phase `x . xi + t tau` at a node and level.
    fn phase(&self, grid: &Grid, node: usize, t: f64) -> f64 {
        let x = grid.coords(node);
        x[0] * self.xi[0] + x[1] * self.xi[1] + t * self.tau
    }
}

/// Smooth bump supported on the open window, equal to one at its center.
pub fn time_window(t: f64, window: (f64, f64)) -> f64 {
    let s = (2.0 * t - window.0 - window.1) / (window.1 - window.0);
    if s.abs() >= 1.0 - 1e-9 {
        return 0.0;
    }
    (1.0 - 1.0 / (1.0 - s * s)).exp()
}

/// Time derivative of [`time_window`].
pub fn time_window_deriv(t: f64, window: (f64, f64)) -> f64 {
    let s = (2.0 * t - window.0 - window.1) / (window.1 - window.0);
    if s.abs() >= 1.0 - 1e-9 {
        return 0.0;
    }
    let u = 1.0 - s * s;
    let chi = (1.0 - 1.0 / u).exp();
    chi * (-2.0 * s / (u * u)) * (2.0 / (window.1 - window.0))
}

/// Multilinear interpolation of `zeta . q` at an arbitrary point, clamped to
/// the box.
fn ray_component_at(field: &VectorField, zeta: [f64; 2], point: [f64; 2]) -> f64 {
    let grid = field.grid();
    let dim = grid.dim();
    let mut idx = [0usize; 2];
    let mut frac = [0.0f64; 2];
    for a in 0..dim {
        let lo = grid.extent()[a][0];
        let h = grid.h()[a];
        let n = grid.n_cells()[a];
        let s = ((point[a] - lo) / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        idx[a] = i;
        frac[a] = s - i as f64;
    }
    let mut acc = 0.0;
    for (a, &za) in zeta.iter().enumerate().take(dim) {
        if za == 0.0 {
            continue;
        }
        let comp = field.comp(a);
        let value = if dim == 1 {
            let i = idx[0];
            comp[i] * (1.0 - frac[0]) + comp[i + 1] * frac[0]
        } else {
            let n00 = grid.node_index(idx[0], idx[1]);
            let n01 = grid.node_index(idx[0], idx[1] + 1);
            let n10 = grid.node_index(idx[0] + 1, idx[1]);
            let n11 = grid.node_index(idx[0] + 1, idx[1] + 1);
            let (f0, f1) = (frac[0], frac[1]);
            comp[n00] * (1.0 - f0) * (1.0 - f1)
                + comp[n01] * (1.0 - f0) * f1
                + comp[n10] * f0 * (1.0 - f1)
                + comp[n11] * f0 * f1
        };
        acc += za * value;
    }
    acc
}

/// `int_0^exit zeta . q(start + s zeta) ds` by the trapezoid rule with step
/// at most half the finest spacing, ending exactly at the box boundary.
pub fn ray_integral(field: &VectorField, zeta: [f64; 2], start: [f64; 2]) -> f64 {
    let grid = field.grid();
    let dim = grid.dim();
    let mut s_exit = f64::INFINITY;
    for a in 0..dim {
        if zeta[a] > 0.0 {
            s_exit = s_exit.min((grid.extent()[a][1] - start[a]) / zeta[a]);
        } else if zeta[a] < 0.0 {
            s_exit = s_exit.min((grid.extent()[a][0] - start[a]) / zeta[a]);
        }
    }
    let s_exit = s_exit.max(0.0);
    if s_exit == 0.0 {
        return 0.0;
    }
    let steps = (s_exit / (0.5 * grid.h_min())).ceil().max(1.0) as usize;
    let ds = s_exit / steps as f64;
    let sample = |s: f64| {
        ray_component_at(
            field,
            zeta,
            [start[0] + s * zeta[0], start[1] + s * zeta[1]],
        )
    };
    let mut acc = 0.5 * (sample(0.0) + sample(s_exit));
    for k in 1..steps {
        acc += sample(k as f64 * ds);
    }
    acc * ds
}

/// The envelope `E = exp((1/2) int zeta . q)` at every node.
pub fn ray_envelope(drift: &VectorField, zeta: [f64; 2]) -> ScalarField {
    let grid = drift.grid().clone();
    ScalarField::new(
        grid.clone(),
        (0..grid.n_nodes())
            .map(|node| (0.5 * ray_integral(drift, zeta, grid.coords(node))).exp())
            .collect(),
    )
    .expect("envelope values are finite")
}

/// Amplitudes of one probe pair on the full space-time grid.
#[derive(Debug, Clone)]
pub struct ProbeAmplitudes {
    pub params: CgoParams,
    /// `E` evaluated at every node.
    pub envelope: ScalarField,
    /// Forward amplitude `a`.
    pub forward: ComplexSpaceTimeField,
    /// Backward amplitude `b` (real: the oscillation rides on `a`).
    pub backward: SpaceTimeField,
}

/// Validate the parameters and evaluate both amplitudes against the drift.
pub fn build_amplitudes(
    grid: &Arc<Grid>,
    drift: &VectorField,
    params: CgoParams,
) -> Result<ProbeAmplitudes, ProbeError> {
    let params = params.validated(grid)?;
    let envelope = ray_envelope(drift, params.zeta);
    let mut forward = ComplexSpaceTimeField::zeros(grid.clone());
    let mut backward = SpaceTimeField::zeros(grid.clone());
    for level in 0..grid.levels() {
        let t = grid.t(level);
        let chi = time_window(t, params.window);
        let f_re = forward.re.level_mut(level);
        let f_im = forward.im.level_mut(level);
        let b = backward.level_mut(level);
        for node in 0..grid.n_nodes() {
            let phase = params.phase(grid, node, t);
            let weight = chi * envelope.at(node);
            f_re[node] = weight * phase.cos();
            f_im[node] = -weight * phase.sin();
            b[node] = chi / envelope.at(node);
        }
    }
    Ok(ProbeAmplitudes {
        params,
        envelope,
        forward,
        backward,
    })
}

/// Value of the forward amplitude at one node and time, straight from the
/// definition (used for sources and boundary weights).
pub fn forward_amplitude_at(
    params: &CgoParams,
    envelope: &ScalarField,
    node: usize,
    t: f64,
) -> Complex64 {
    let grid = envelope.grid();
    let chi = time_window(t, params.window);
    let phase = params.phase(grid, node, t);
    Complex64::new(0.0, -phase).exp() * (chi * envelope.at(node))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d() -> Arc<Grid> {
        Grid::new_1d(0.0, 1.0, 33, 0.5, 16).unwrap()
    }

    #[test]
    fn window_is_a_smooth_bump() {
        let w = (0.1, 0.4);
        assert_eq!(time_window(0.1, w), 0.0);
        assert_eq!(time_window(0.4, w), 0.0);
        assert_eq!(time_window(0.05, w), 0.0);
        assert!((time_window(0.25, w) - 1.0).abs() < 1e-12);
        // Finite differences of the window match the coded derivative.
        for &t in &[0.15, 0.2, 0.3, 0.35] {
            let d = 1e-6;
            let fd = (time_window(t + d, w) - time_window(t - d, w)) / (2.0 * d);
            assert!(
                (fd - time_window_deriv(t, w)).abs() < 1e-6,
                "derivative mismatch at {t}"
            );
        }
    }

    #[test]
    fn ray_integral_is_exact_for_linear_fields() {
        let grid = grid_1d();
        let field = VectorField::from_fn(grid.clone(), |x| [1.0 + 2.0 * x[0], 0.0]);
        // From x rightward: int_x^1 (1 + 2s) ds = (1 - x) + (1 - x^2).
        let x = 0.25;
        let exact = (1.0 - x) + (1.0 - x * x);
        let got = ray_integral(&field, [1.0, 0.0], [x, 0.0]);
        assert!((got - exact).abs() < 1e-10, "{got} vs {exact}");
        // Leftward from the same point.
        let exact_left = -(x + x * x);
        let got_left = ray_integral(&field, [-1.0, 0.0], [x, 0.0]);
        assert!((got_left - exact_left).abs() < 1e-10);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let grid = grid_1d();
        let base = CgoParams {
            zeta: [1.0, 0.0],
            xi: [0.0, 0.0],
            tau: 0.0,
            rho: 4.0,
            window: (0.1, 0.4),
        };
        assert!(base.clone().validated(&grid).is_ok());
        let zero = CgoParams {
            zeta: [0.0, 0.0],
            ..base.clone()
        };
        assert!(matches!(
            zero.validated(&grid),
            Err(ProbeError::ZeroDirection)
        ));
        let big = CgoParams {
            rho: 64.0,
            ..base.clone()
        };
        assert!(matches!(
            big.validated(&grid),
            Err(ProbeError::OverflowRisk { .. })
        ));
        let skew = CgoParams {
            xi: [1.0, 0.0],
            ..base.clone()
        };
        assert!(matches!(
            skew.validated(&grid),
            Err(ProbeError::InvalidParams(_))
        ));
        let grid2 = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [9, 9], 0.5, 8).unwrap();
        let skew2 = CgoParams {
            zeta: [1.0, 0.0],
            xi: [1.0, 1.0],
            ..base
        };
        assert!(matches!(
            skew2.validated(&grid2),
            Err(ProbeError::InvalidParams(_))
        ));
    }

    #[test]
    fn amplitude_product_drops_the_envelope() {
        let grid = Grid::new_2d([[0.0, 1.0], [0.0, 1.0]], [17, 17], 0.5, 8).unwrap();
        let drift = VectorField::from_fn(grid.clone(), |x| [x[1] - 0.3, 0.2 * x[0]]);
        let params = CgoParams {
            zeta: [0.0, 1.0],
            xi: [std::f64::consts::TAU, 0.0],
            tau: 3.0,
            rho: 8.0,
            window: (0.1, 0.4),
        };
        let amps = build_amplitudes(&grid, &drift, params.clone()).unwrap();
        for level in (0..grid.levels()).step_by(3) {
            let t = grid.t(level);
            for node in (0..grid.n_nodes()).step_by(7) {
                let a = Complex64::new(
                    amps.forward.re.at(node, level),
                    amps.forward.im.at(node, level),
                );
                let product = a * amps.backward.at(node, level);
                let chi = time_window(t, params.window);
                let phase = params.phase(&grid, node, t);
                let expected = Complex64::new(0.0, -phase).exp() * chi * chi;
                assert!(
                    (product - expected).norm() < 1e-12,
                    "product mismatch at node {node} level {level}"
                );
            }
        }
    }
}
