//! Order extraction from measurement ladders, and measurement noise.
//!
//! Reconstruction never sees interior fields — only boundary records of
//! full nonlinear solves at several perturbation sizes.  Divided
//! differences along the size axis convert those into records of the
//! Taylor orders:
//!
//! ```text
//! D(e) = D(0) + e L1 + e^2 L2 + e^3 L3 + ...
//! ```
//!
//! using the five-point central stencils, so the extraction error is
//! `O(e^2)` for `L1` and `L2` and `O(e^2)` for `L3` as well.  Noise is
//! applied to the extracted order records, not the raw solves: dividing
//! raw-record noise by `e^2` or `e^3` would drown the orders long before
//! realistic noise floors, so the order records are the honest place to
//! model measurement error.

use rand_chacha::ChaCha12Rng;

use crate::forward::CauchyDataset;

/// Per-record-kind noise standard deviations actually applied.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoiseScales {
    pub value_trace: f64,
    pub value_flux: f64,
    pub density_trace: f64,
    pub density_flux: f64,
}

/// Boundary records of the first three Taylor orders along one direction.
#[derive(Debug, Clone)]
pub struct DirectionRecords {
    pub first: CauchyDataset,
    pub second: CauchyDataset,
    pub third: Option<CauchyDataset>,
    pub first_noise: NoiseScales,
    pub second_noise: NoiseScales,
    pub third_noise: NoiseScales,
}

/// Linear combination of datasets with the given weights.
fn combine(parts: &[(f64, &CauchyDataset)], scale: f64) -> CauchyDataset {
    let mut acc = parts[0].1.clone();
    acc.scale(parts[0].0);
    for &(w, d) in &parts[1..] {
        acc.axpy(w, d);
    }
    acc.scale(scale);
    acc
}

/// Extract Taylor-order records from solves at sizes
/// `{-2e, -e, 0, +e, +2e}` of a single direction.
pub fn extract_orders(
    baseline: &CauchyDataset,
    minus2: &CauchyDataset,
    minus1: &CauchyDataset,
    plus1: &CauchyDataset,
    plus2: &CauchyDataset,
    eps: f64,
    want_third: bool,
) -> DirectionRecords {
    let first = combine(
        &[
            (8.0, plus1),
            (-8.0, minus1),
            (-1.0, plus2),
            (1.0, minus2),
        ],
        1.0 / (12.0 * eps),
    );
    let second = combine(
        &[
            (16.0, plus1),
            (16.0, minus1),
            (-1.0, plus2),
            (-1.0, minus2),
            (-30.0, baseline),
        ],
        1.0 / (24.0 * eps * eps),
    );
    let third = want_third.then(|| {
        combine(
            &[
                (1.0, plus2),
                (-2.0, plus1),
                (2.0, minus1),
                (-1.0, minus2),
            ],
            1.0 / (12.0 * eps * eps * eps),
        )
    });
    DirectionRecords {
        first,
        second,
        third,
        first_noise: NoiseScales::default(),
        second_noise: NoiseScales::default(),
        third_noise: NoiseScales::default(),
    }
}

/// Standard normal deviate by the Box-Muller transform.
pub fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    use rand::Rng;
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn perturb(data: &mut crate::fields::BoundaryData, sigma: f64, rng: &mut ChaCha12Rng) {
    if sigma == 0.0 {
        return;
    }
    let levels = data.grid().levels();
    for level in 0..levels {
        for v in data.level_mut(level) {
            *v += sigma * standard_normal(rng);
        }
    }
}

fn noise_one(dataset: &mut CauchyDataset, level: f64, rng: &mut ChaCha12Rng) -> NoiseScales {
    let scales = NoiseScales {
        value_trace: level * dataset.value_trace.sup_norm(),
        value_flux: level * dataset.value_flux.sup_norm(),
        density_trace: level * dataset.density_trace.sup_norm(),
        density_flux: level * dataset.density_flux.sup_norm(),
    };
    perturb(&mut dataset.value_trace, scales.value_trace, rng);
    perturb(&mut dataset.value_flux, scales.value_flux, rng);
    perturb(&mut dataset.density_trace, scales.density_trace, rng);
    perturb(&mut dataset.density_flux, scales.density_flux, rng);
    scales
}

impl DirectionRecords {
    /// Add independent Gaussian noise of relative size `level` to every
    /// sample, scaled per record kind, and remember the scales used.
    pub fn add_noise(&mut self, level: f64, rng: &mut ChaCha12Rng) {
        if level == 0.0 {
            return;
        }
        self.first_noise = noise_one(&mut self.first, level, rng);
        self.second_noise = noise_one(&mut self.second, level, rng);
        if let Some(third) = &mut self.third {
            self.third_noise = noise_one(third, level, rng);
        }
    }
}
