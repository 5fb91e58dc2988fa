//! Small dense helpers for J×J factor covariance matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance for symmetry and eigenvalue checks.
pub const PSD_TOL: f64 = 1e-10;

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_diagonal(m: &DMatrix<f64>, tol: f64) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].abs() <= tol))
}

/// Lower-triangular factor `L` with `L Lᵀ = m` for a positive-semidefinite `m`.
///
/// Zero pivots are allowed (the corresponding column of `L` is zero) as long as
/// the rest of that column is numerically zero too; anything else is reported
/// through `what` as an infeasible covariance.
pub fn psd_cholesky(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(Error::Infeasible(format!(
                "{what} is not positive semidefinite (pivot {d:.3e} at {j})"
            )));
        }
        if d <= tol {
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-8 * scale {
                    return Err(Error::Infeasible(format!(
                        "{what} is not positive semidefinite (singular pivot at {j})"
                    )));
                }
            }
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / root;
        }
    }
    Ok(l)
}

/// Writes `l * z` into `out` (lower-triangular matrix-vector product).
#[inline]
pub fn lower_mul(l: &DMatrix<f64>, z: &[f64], out: &mut [f64]) {
    let n = z.len();
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..=i {
            s += l[(i, k)] * z[k];
        }
        out[i] = s;
    }
}

/// Moore-Penrose inverse of a symmetric PSD matrix via its eigendecomposition.
pub fn psd_pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let cutoff = 1e-12 * eig.eigenvalues.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cutoff {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / ev;
        }
    }
    out
}
