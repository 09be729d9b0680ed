//! Running cost as a truncated Taylor expansion around a reference density.
//!
//! ```text
//! F(x, z) = sum_{k >= 2} F_k(x) (z - m_ref(x))^k / k!
//! ```
//!
//! The expansion starts at order two: the cost and its first density
//! derivative vanish at the reference, which is exactly the condition that
//! makes a stationary pair of the uncoupled equations stationary for the
//! coupled system as well.

use crate::error::SolverError;
use crate::fields::ScalarField;

#[derive(Debug, Clone)]
pub struct RunningCost {
    m_ref: ScalarField,
    /// `(order, coefficient)` sorted by order; orders are unique and >= 2.
    coeffs: Vec<(usize, ScalarField)>,
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl RunningCost {
    pub fn new(
        m_ref: ScalarField,
        mut coeffs: Vec<(usize, ScalarField)>,
    ) -> Result<Self, SolverError> {
        coeffs.sort_by_key(|(k, _)| *k);
        for pair in coeffs.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(SolverError::InvalidInput(format!(
                    "duplicate cost coefficient of order {}",
                    pair[0].0
                )));
            }
        }
        for (k, f) in &coeffs {
            if *k < 2 {
                return Err(SolverError::InvalidInput(format!(
                    "cost coefficient order {k} below the admissible minimum 2"
                )));
            }
            if !f.grid().same_layout(m_ref.grid()) {
                return Err(SolverError::InvalidInput(
                    "cost coefficient grid differs from the reference density grid".into(),
                ));
            }
        }
        Ok(RunningCost { m_ref, coeffs })
    }

    /// Cost that is identically zero (still pinned to a reference density).
    pub fn zero(m_ref: ScalarField) -> Self {
        RunningCost {
            m_ref,
            coeffs: Vec::new(),
        }
    }

    pub fn reference_density(&self) -> &ScalarField {
        &self.m_ref
    }

    pub fn coefficient(&self, order: usize) -> Option<&ScalarField> {
        self.coeffs
            .iter()
            .find(|(k, _)| *k == order)
            .map(|(_, f)| f)
    }

    pub fn orders(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs.iter().map(|(k, _)| *k)
    }

    pub fn max_order(&self) -> usize {
        self.coeffs.last().map(|(k, _)| *k).unwrap_or(0)
    }

    pub fn eval_at(&self, node: usize, z: f64) -> f64 {
        let d = z - self.m_ref.at(node);
        let mut acc = 0.0;
        for (k, f) in &self.coeffs {
            acc += f.at(node) * d.powi(*k as i32) / factorial(*k);
        }
        acc
    }

    /// Evaluate `F(x, m(x))` for one density level.
    pub fn eval_level(&self, m_level: &[f64], out: &mut [f64]) {
        debug_assert_eq!(m_level.len(), out.len());
        for (node, o) in out.iter_mut().enumerate() {
            *o = self.eval_at(node, m_level[node]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    #[test]
    fn evaluates_taylor_polynomial() {
        let grid = Grid::new_1d(0.0, 1.0, 5, 1.0, 2).unwrap();
        let m_ref = ScalarField::constant(grid.clone(), 2.0);
        let f2 = ScalarField::constant(grid.clone(), 3.0);
        let f3 = ScalarField::constant(grid.clone(), -6.0);
        let cost = RunningCost::new(m_ref, vec![(3, f3), (2, f2)]).unwrap();
        // F(z) = 3 (z-2)^2 / 2 - 6 (z-2)^3 / 6
        let z = 2.5;
        let expected = 1.5 * 0.25 - 0.125;
        assert!((cost.eval_at(0, z) - expected).abs() < 1e-14);
        // Vanishes to second order at the reference.
        assert_eq!(cost.eval_at(0, 2.0), 0.0);
        let d = 1e-7;
        assert!(((cost.eval_at(0, 2.0 + d) - cost.eval_at(0, 2.0 - d)) / (2.0 * d)).abs() < 1e-6);
    }

    #[test]
    fn rejects_low_orders_and_duplicates() {
        let grid = Grid::new_1d(0.0, 1.0, 5, 1.0, 2).unwrap();
        let m_ref = ScalarField::constant(grid.clone(), 1.0);
        let f = ScalarField::constant(grid.clone(), 1.0);
        assert!(RunningCost::new(m_ref.clone(), vec![(1, f.clone())]).is_err());
        assert!(RunningCost::new(m_ref, vec![(2, f.clone()), (2, f)]).is_err());
    }
}
