//! Direct linear algebra kernels: banded LU with partial pivoting and dense
//! regularized least squares.
//!
//! Every implicit time step, stationary Newton step and elliptic recovery in
//! this crate reduces to a banded system (bandwidth ~ 1 in one dimension,
//! ~ the transverse node count in two), so a band factorization with reuse is
//! the workhorse.  Storage follows the classic band scheme: entry `(i, j)`
//! lives at storage row `kl + ku + i - j`, and the first `kl` storage rows
//! are reserved for the fill introduced by row pivoting.

use crate::error::LinalgError;
use nalgebra::{DMatrix, DVector};

/// General banded matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// `(2 kl + ku + 1) * n` values, column-contiguous per storage row.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        assert!(n > 0, "empty matrix");
        assert!(kl < n && ku < n, "bandwidths must be smaller than n");
        BandMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; (2 * kl + ku + 1) * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(j <= i + self.ku && i <= j + self.kl, "entry outside band");
        (self.kl + self.ku + i - j) * self.n + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i + self.ku || i > j + self.kl {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j);
        self.data[s] = value;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    /// LU factorization with partial pivoting.  Fails on an exactly zero pivot.
    pub fn factor(mut self) -> Result<BandLu, LinalgError> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        // Fill band: pivoting can push nonzeros up to `kl + ku` above the diagonal.
        let kv = kl + ku;
        let mut pivots = vec![0usize; n];

        // Raw accessor over the widened band (storage row = kl + kv + ... no:
        // here row r = kl + ku + i - j, valid for i - j in [-(kl+ku), kl]).
        let idx = |i: usize, j: usize| -> usize { (kl + ku + i - j) * n + j };

        for k in 0..n {
            let imax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[idx(k, k)].abs();
            for i in (k + 1)..=imax {
                let v = self.data[idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(LinalgError::SingularSystem { column: k });
            }
            pivots[k] = p;
            let jmax = (k + kv).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = idx(k, j);
                    let b = idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[idx(k, k)];
            for i in (k + 1)..=imax {
                let l = self.data[idx(i, k)] / pivot;
                self.data[idx(i, k)] = l;
                if l != 0.0 {
                    for j in (k + 1)..=jmax {
                        let upper = self.data[idx(k, j)];
                        if upper != 0.0 {
                            self.data[idx(i, j)] -= l * upper;
                        }
                    }
                }
            }
        }

        Ok(BandLu {
            n,
            kl,
            ku,
            data: self.data,
            pivots,
        })
    }
}

/// Factored form produced by [`BandMatrix::factor`]; reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "right-hand side length mismatch");
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let kv = kl + ku;
        let idx = |i: usize, j: usize| -> usize { (kl + ku + i - j) * n + j };

        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(p, k);
            }
            let bk = b[k];
            if bk != 0.0 {
                let imax = (k + kl).min(n - 1);
                for i in (k + 1)..=imax {
                    b[i] -= self.data[idx(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + kv).min(n - 1);
            let mut s = b[k];
            for j in (k + 1)..=jmax {
                s -= self.data[idx(k, j)] * b[j];
            }
            b[k] = s / self.data[idx(k, k)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solution of a regularized least-squares problem.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub solution: Vec<f64>,
    /// Euclidean norm of `A x - b` (data block only).
    pub data_residual: f64,
    /// Euclidean norm of `L x` (regularizer block).
    pub penalty_norm: f64,
    /// Reciprocal condition estimate of the stacked system.
    pub rcond: f64,
}

/// Minimizes `|A x - b|^2 + lambda |L x|^2` by solving the stacked system
/// `[A; sqrt(lambda) L] x = [b; 0]` with an SVD.  `L` may be empty, in which
/// case plain least squares is performed.
pub fn regularized_least_squares(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    l: Option<&DMatrix<f64>>,
    lambda: f64,
) -> Result<LeastSquaresFit, LinalgError> {
    if a.nrows() != b.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "matrix has {} rows, rhs has {}",
            a.nrows(),
            b.len()
        )));
    }
    if lambda < 0.0 {
        return Err(LinalgError::DimensionMismatch(
            "negative regularization weight".into(),
        ));
    }
    let ncols = a.ncols();
    let extra = match l {
        Some(l) if lambda > 0.0 => {
            if l.ncols() != ncols {
                return Err(LinalgError::DimensionMismatch(format!(
                    "regularizer has {} columns, matrix has {}",
                    l.ncols(),
                    ncols
                )));
            }
            l.nrows()
        }
        _ => 0,
    };

    let mut stacked = DMatrix::<f64>::zeros(a.nrows() + extra, ncols);
    stacked.view_mut((0, 0), (a.nrows(), ncols)).copy_from(a);
    if extra > 0 {
        let l = l.unwrap();
        let sqrt_lambda = lambda.sqrt();
        let mut view = stacked.view_mut((a.nrows(), 0), (extra, ncols));
        for i in 0..extra {
            for j in 0..ncols {
                view[(i, j)] = sqrt_lambda * l[(i, j)];
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(a.nrows() + extra);
    rhs.rows_mut(0, a.nrows()).copy_from(b);

    let svd = stacked.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smax == 0.0 {
        return Err(LinalgError::SingularSystem { column: 0 });
    }
    let rcond = smin / smax;
    let x = svd
        .solve(&rhs, smax * 1e-14)
        .map_err(|_| LinalgError::SingularSystem { column: 0 })?;

    let data_residual = (a * &x - b).norm();
    let penalty_norm = match l {
        Some(l) => (l * &x).norm(),
        None => 0.0,
    };
    Ok(LeastSquaresFit {
        solution: x.iter().cloned().collect(),
        data_residual,
        penalty_norm,
        rcond,
    })
}
