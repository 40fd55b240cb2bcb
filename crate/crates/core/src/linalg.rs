//! Thin wrappers over faer for the dense symmetric solves used everywhere.

use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::Side;

use crate::{Error, Result};

pub type Matrix = faer::Mat<f64>;

/// Relative jitter ladder: 0, then 1e-12 .. 1e-6 times the mean diagonal.
const JITTER_LADDER: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factor of `K + shift I + jitter I`.
pub struct ShiftedCholesky {
    llt: Llt<f64>,
    /// Total diagonal shift actually factorized (`shift + jitter`).
    pub total_shift: f64,
    pub jitter: f64,
}

/// Factorizes `K + shift I`, escalating diagonal jitter on failure.
pub fn shifted_cholesky(k: &Matrix, shift: f64) -> Result<ShiftedCholesky> {
    let n = k.nrows();
    if n == 0 {
        return Err(Error::Empty("matrix to factorize"));
    }
    if k.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "square matrix",
            expected: n,
            actual: k.ncols(),
        });
    }
    let trace: f64 = (0..n).map(|i| k[(i, i)]).sum();
    let scale = if trace > 0.0 { trace / n as f64 } else { 1.0 };
    let mut last = 0.0;
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        last = jitter;
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += shift + jitter;
        }
        if let Ok(llt) = a.llt(Side::Lower) {
            let ok = (0..n).all(|i| {
                let d = llt.L()[(i, i)];
                d.is_finite() && d > 0.0
            });
            if ok {
                return Ok(ShiftedCholesky {
                    llt,
                    total_shift: shift + jitter,
                    jitter,
                });
            }
        }
    }
    Err(Error::Factorization { jitter: last })
}

impl ShiftedCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = Matrix::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.llt.solve_in_place(b.as_mut());
        (0..rhs.len()).map(|i| b[(i, 0)]).collect()
    }

    pub fn solve_matrix(&self, rhs: &Matrix) -> Matrix {
        self.llt.solve(rhs)
    }

    pub fn inverse(&self) -> Matrix {
        self.llt.inverse()
    }

    /// Diagonal of the inverse of the factorized matrix.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let inv = self.inverse();
        (0..inv.nrows()).map(|i| inv[(i, i)]).collect()
    }

    /// Solves `L v = rhs` for the lower factor `L`.
    pub fn forward(&self, rhs: &Matrix) -> Matrix {
        let mut b = rhs.clone();
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            self.llt.L(),
            b.as_mut(),
            faer::Par::Seq,
        );
        b
    }

    /// Solves `L^T v = rhs`.
    pub fn backward(&self, rhs: &Matrix) -> Matrix {
        let mut b = rhs.clone();
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(
            self.llt.L().transpose(),
            b.as_mut(),
            faer::Par::Seq,
        );
        b
    }
}

/// Eigenvalues of a symmetric matrix in nondecreasing order.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::Eigen)
}

#[cfg(test)]
pub fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub fn column(v: &[f64]) -> Matrix {
    Matrix::from_fn(v.len(), 1, |i, _| v[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let k = Matrix::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 1.0 });
        let f = shifted_cholesky(&k, 1.0).unwrap();
        // [[3,1],[1,3]] x = [4,4] -> x = [1,1].
        let x = f.solve(&[4.0, 4.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert_eq!(f.jitter, 0.0);
        let d = f.inverse_diagonal();
        assert!((d[0] - 3.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        let k = Matrix::from_fn(3, 3, |_, _| 1.0);
        let f = shifted_cholesky(&k, 0.0).unwrap();
        assert!(f.jitter > 0.0 && f.jitter <= 1e-6);
        let neg = Matrix::from_fn(2, 2, |i, j| if i == j { -1.0 } else { 0.0 });
        assert!(matches!(shifted_cholesky(&neg, 0.0), Err(Error::Factorization { .. })));
    }

    #[test]
    fn triangular_halves_compose() {
        let k = Matrix::from_fn(3, 3, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        let f = shifted_cholesky(&k, 0.5).unwrap();
        let b = column(&[1.0, -2.0, 0.5]);
        let x = f.backward(&f.forward(&b));
        let y = f.solve(&[1.0, -2.0, 0.5]);
        for i in 0..3 {
            assert!((x[(i, 0)] - y[i]).abs() < 1e-13);
        }
    }
}
