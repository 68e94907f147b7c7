//! Dense symmetric linear algebra for small matrices: cyclic Jacobi
//! eigendecomposition and Cholesky factorization.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("negative eigenvalue {0:e} beyond tolerance")]
    NegativeEigenvalue(f64),
    #[error("matrix is singular (smallest eigenvalue {0:e})")]
    Singular(f64),
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues below this (relative to the largest) are treated as zero.
pub const EIGEN_CLIP: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

fn scale_of(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()))
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale_of(m) {
        return Err(LinalgError::NotSymmetric(worst));
    }
    Ok(())
}

/// Eigenvalues (unsorted) and orthonormal eigenvectors (columns) of a
/// symmetric matrix, by cyclic Jacobi rotations.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    check_symmetric(m)?;
    let n = m.nrows();
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let norm = a.norm().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok(((0..n).map(|i| a[(i, i)]).collect(), v))
}

/// `V diag(f(lambda)) V^T`, symmetrized.
fn spectral_map(values: &[f64], vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = values.len();
    let d = DVector::from_iterator(n, values.iter().map(|&l| f(l)));
    let out = vectors * DMatrix::from_diagonal(&d) * vectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let (values, vectors) = symmetric_eigen(m)?;
    let top = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if let Some(&neg) = values.iter().find(|&&l| l < -1e-10 * top) {
        return Err(LinalgError::NegativeEigenvalue(neg));
    }
    Ok(spectral_map(&values, &vectors, |l| {
        if l < EIGEN_CLIP * top {
            0.0
        } else {
            l.sqrt()
        }
    }))
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn inv_sqrt_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let (values, vectors) = symmetric_eigen(m)?;
    let top = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(low > EIGEN_CLIP * top) {
        return Err(LinalgError::Singular(low));
    }
    Ok(spectral_map(&values, &vectors, |l| 1.0 / l.sqrt()))
}

/// Lower-triangular `L` with positive diagonal and `L L^T = m`.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_symmetric(m)?;
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { row: j, pivot: d });
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

/// Solves `L L^T x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn inverse_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let l = cholesky_lower(m)?;
    let n = m.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::<f64>::zeros(n);
        e[j] = 1.0;
        inv.set_column(j, &cholesky_solve(&l, &e));
    }
    Ok((&inv + inv.transpose()) * 0.5)
}
