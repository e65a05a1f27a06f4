//! Dense kernels used by the simulator: Cholesky factorization, SPD solves
//! and an upper bound on the spectral radius.
//!
//! Everything is dense `f64`; the systems handled here have at most a few
//! hundred coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot floor for [`cholesky_spd`].
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Maximum absolute entry; 0 for empty matrices.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Infinity norm of a vector (0 for empty vectors).
pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Induced infinity norm (max absolute row sum).
pub fn mat_inf_norm(m: &Mat) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Lower-triangular `L` with `M = L Lᵀ`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot drops to or below
/// `1e-12 · max diag(M)`.
pub fn cholesky_spd(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "cholesky of a {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0_f64, f64::max);
    let floor = PIVOT_TOLERANCE * max_diag;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || d <= 0.0 {
            return Err(Error::NotPositiveDefinite { row: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `(L Lᵀ) X = B` by forward and back substitution.
pub fn solve_spd(l: &Mat, b: &Mat) -> Result<Mat> {
    let n = l.nrows();
    if l.ncols() != n || b.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "factor is {}x{}, right-hand side has {} rows",
            n,
            l.ncols(),
            b.nrows()
        )));
    }
    let mut x = b.clone();
    for c in 0..x.ncols() {
        // L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Vector convenience wrapper around [`solve_spd`].
pub fn solve_spd_vec(l: &Mat, b: &Vector) -> Result<Vector> {
    let x = solve_spd(l, &Mat::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(Vector::from_column_slice(x.as_slice()))
}

/// Upper estimate of the largest eigenvalue of a symmetric PSD matrix,
/// inflated by 1%.
///
/// Small matrices use a dense symmetric eigensolver; larger ones use power
/// iteration (at most 10 000 iterations).
pub fn max_eigenvalue(s: &Mat) -> f64 {
    let n = s.nrows();
    if n == 0 || max_abs(s) == 0.0 {
        return 0.0;
    }
    if n <= DENSE_EIGEN_LIMIT {
        let top = s.clone().symmetric_eigenvalues().max();
        return 1.01 * top.max(0.0);
    }
    // Power iteration stopped on the eigen-residual; a Rayleigh quotient
    // that merely stops changing can sit near a smaller eigenvalue.
    let mut v = Vector::from_fn(n, |i, _| 1.0 + 0.37 * ((i as f64 + 1.0) * 1.618_033_988_75).fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = s * &v;
        lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        let resid = (&w - &v * lambda).norm();
        v = w / norm;
        if resid <= 1e-8 * lambda.abs() {
            break;
        }
    }
    1.01 * lambda.max(0.0)
}

/// Largest size for which [`max_eigenvalue`] uses a dense decomposition.
pub const DENSE_EIGEN_LIMIT: usize = 200;
