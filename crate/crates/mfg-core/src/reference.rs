//! Closed-form reference solutions used to validate the numerical solvers.
//!
//! Everything here is independent of the lattice discretization: values come
//! from analytic formulas, series, or high-order quadrature of explicit
//! integrands, so agreement with a solver is evidence about the solver and
//! not a tautology.

use std::f64::consts::PI;

/// Composite Simpson rule on `[a, b]` with `2 n` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let m = 2 * n.max(1);
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// One-dimensional stationary family with a non-constant conformal factor.
///
/// With `kappa(x) = 1 + 0.5 sin(2 pi x)` and base weight 1, the pair
///
/// ```text
/// u'(x) = v0 / V(x),            V(x) = 1 - v0 * int_0^x kappa,
/// m(x)  = V(x)^2 (m_left + c * int_0^x V^{-2}),
/// ```
///
/// satisfies the stationary system exactly:
/// `-u'' + kappa (u')^2 = 0` and `-(m' + 2 kappa u' m)' = 0`.
/// `u` and the `V^{-2}` integral are evaluated by high-order quadrature.
#[derive(Debug, Clone, Copy)]
pub struct ConformalFamily1d {
    pub v0: f64,
    pub c: f64,
    pub m_left: f64,
}

impl ConformalFamily1d {
    pub fn standard() -> Self {
        ConformalFamily1d {
            v0: 0.25,
            c: 0.1,
            m_left: 1.0,
        }
    }

    pub fn kappa(&self, x: f64) -> f64 {
        1.0 + 0.5 * (2.0 * PI * x).sin()
    }

    /// `int_0^x kappa`, in closed form.
    pub fn kappa_integral(&self, x: f64) -> f64 {
        x + (1.0 - (2.0 * PI * x).cos()) / (4.0 * PI)
    }

    fn v(&self, x: f64) -> f64 {
        1.0 - self.v0 * self.kappa_integral(x)
    }

    pub fn value_prime(&self, x: f64) -> f64 {
        self.v0 / self.v(x)
    }

    /// `u(x) = int_0^x u'`, normalized to `u(0) = 0`.
    pub fn value(&self, x: f64) -> f64 {
        simpson(|s| self.value_prime(s), 0.0, x, 512)
    }

    pub fn density(&self, x: f64) -> f64 {
        let v = self.v(x);
        let integral = simpson(|s| self.v(s).powi(-2), 0.0, x, 512);
        v * v * (self.m_left + self.c * integral)
    }

    /// Drift `q = 2 kappa u'` of the linearized system.
    pub fn drift(&self, x: f64) -> f64 {
        2.0 * self.kappa(x) * self.value_prime(x)
    }
}

/// Two-dimensional stationary family on the identity base metric.
///
/// For a positive harmonic `H`, the pair `u = -ln H`, `m = H^2` satisfies
/// `-Delta u + |grad u|^2 = 0` and `-Delta m - div(2 m grad u) = 0` exactly.
/// Here `H(x, y) = 2.5 + x - y + (x^2 - y^2)/2`, positive on the unit
/// square.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicFamily2d;

impl HarmonicFamily2d {
    pub fn h(&self, x: f64, y: f64) -> f64 {
        2.5 + x - y + 0.5 * (x * x - y * y)
    }

    pub fn grad_h(&self, x: f64, y: f64) -> [f64; 2] {
        [1.0 + x, -1.0 - y]
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        -self.h(x, y).ln()
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        let h = self.h(x, y);
        h * h
    }

    pub fn grad_value(&self, x: f64, y: f64) -> [f64; 2] {
        let h = self.h(x, y);
        let g = self.grad_h(x, y);
        [-g[0] / h, -g[1] / h]
    }

    /// Drift `q = 2 grad u` (identity metric).
    pub fn drift(&self, x: f64, y: f64) -> [f64; 2] {
        let g = self.grad_value(x, y);
        [2.0 * g[0], 2.0 * g[1]]
    }
}

/// Series solution of the backward heat problem on the unit interval with
/// zero terminal data and boundary values `T - t` on both ends; `s = T - t`
/// is the backward time:
///
/// ```text
/// y(x, s) = s - sum_{k odd} 4 / (k pi)^3 (1 - e^{-k^2 pi^2 s}) sin(k pi x)
/// ```
pub fn backward_heat_series(x: f64, s: f64) -> f64 {
    let mut acc = s;
    for k in (1..400).step_by(2) {
        let kpi = k as f64 * PI;
        acc -= 4.0 / (kpi * kpi * kpi) * (1.0 - (-kpi * kpi * s).exp()) * (kpi * x).sin();
    }
    acc
}

/// Plain O(N^2) discrete Fourier transform of a real sample vector:
/// `X_k = sum_j f_j exp(-2 pi i j k / N)`, returned as (re, im) pairs for
/// `k = 0..N-1`.  Used as an independent check of trapezoid Fourier
/// pairings.
pub fn dft(samples: &[f64]) -> Vec<(f64, f64)> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut re = 0.0;
        let mut im = 0.0;
        for (j, &f) in samples.iter().enumerate() {
            let angle = -2.0 * PI * (j * k % n) as f64 / n as f64;
            re += f * angle.cos();
            im += f * angle.sin();
        }
        out.push((re, im));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conformal_family_satisfies_its_equations() {
        let fam = ConformalFamily1d::standard();
        // Differentiate the closed forms numerically with a tiny step and
        // check the two stationary equations pointwise.
        let d = 1e-5;
        for &x in &[0.11, 0.37, 0.5, 0.73, 0.9] {
            let upp = (fam.value_prime(x + d) - fam.value_prime(x - d)) / (2.0 * d);
            let r_u = -upp + fam.kappa(x) * fam.value_prime(x).powi(2);
            assert!(r_u.abs() < 1e-6, "value equation residual {r_u} at {x}");
            let flux = |s: f64| {
                let mp = (fam.density(s + d) - fam.density(s - d)) / (2.0 * d);
                mp + fam.drift(s) * fam.density(s)
            };
            // m' + q m must be the constant c.
            assert!((flux(x) - fam.c).abs() < 1e-5, "density flux at {x}");
        }
    }

    #[test]
    fn harmonic_family_is_positive_and_consistent() {
        let fam = HarmonicFamily2d;
        for &(x, y) in &[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.5, 0.5)] {
            assert!(fam.h(x, y) > 0.5);
            // Numerical Laplacian of u must equal |grad u|^2.
            let d = 1e-4;
            let lap = (fam.value(x + d, y) + fam.value(x - d, y) + fam.value(x, y + d)
                + fam.value(x, y - d)
                - 4.0 * fam.value(x, y))
                / (d * d);
            let g = fam.grad_value(x, y);
            let resid = -lap + g[0] * g[0] + g[1] * g[1];
            assert!(resid.abs() < 1e-5, "harmonic family residual {resid}");
        }
    }

    #[test]
    fn dft_matches_known_transform() {
        // f_j = cos(2 pi j / N) has X_1 = X_{N-1} = N/2, all else zero.
        let n = 16;
        let samples: Vec<f64> = (0..n)
            .map(|j| (2.0 * PI * j as f64 / n as f64).cos())
            .collect();
        let x = dft(&samples);
        for (k, &(re, im)) in x.iter().enumerate() {
            let expected = if k == 1 || k == n - 1 { n as f64 / 2.0 } else { 0.0 };
            assert!((re - expected).abs() < 1e-10, "re at {k}");
            assert!(im.abs() < 1e-10, "im at {k}");
        }
    }

    #[test]
    fn simpson_is_high_order() {
        let exact = ((3.0f64).exp() - 1.0) / 3.0;
        let e64 = (simpson(|x| (3.0 * x).exp(), 0.0, 1.0, 64) - exact).abs();
        let e128 = (simpson(|x| (3.0 * x).exp(), 0.0, 1.0, 128) - exact).abs();
        assert!(e64 < 1e-7);
        // Fourth-order: halving the panel width cuts the error ~16x.
        assert!(e64 / e128 > 12.0, "ratio {}", e64 / e128);
    }
}
