//! Dense symmetric-matrix helpers shared by the solver and the verifier.
//!
//! Symmetric matrices travel in svec form (upper triangle, column-major,
//! off-diagonals scaled by sqrt(2)) so that the Euclidean inner product of
//! two svecs equals the Frobenius inner product of the matrices.

use nalgebra::{DMatrix, DVector};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Length of the svec of an n x n symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry (i, j), i <= j, inside the svec.
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    j * (j + 1) / 2 + i
}

pub fn mat_to_svec(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.nrows();
    debug_assert_eq!(out.len(), svec_len(n));
    let mut idx = 0;
    for j in 0..n {
        for i in 0..=j {
            out[idx] = if i == j { m[(i, j)] } else { m[(i, j)] * SQRT2 };
            idx += 1;
        }
    }
}

pub fn svec_to_mat(s: &[f64], n: usize) -> DMatrix<f64> {
    debug_assert_eq!(s.len(), svec_len(n));
    let mut out = DMatrix::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                out[(i, j)] = s[idx];
            } else {
                let v = s[idx] / SQRT2;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
            idx += 1;
        }
    }
    out
}

pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Eigendecomposition of a symmetric matrix (the input is symmetrized
/// first to shed round-off skew).
pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let s = (m + m.transpose()) * 0.5;
    let e = s.symmetric_eigen();
    SymEigen { values: e.eigenvalues, vectors: e.eigenvectors }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).values.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Project a symmetric matrix onto the cone { X : X >= floor * I } by
/// clipping eigenvalues.
pub fn psd_project(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let e = sym_eigen(m);
    if e.values.iter().all(|&v| v >= floor) {
        return (m + m.transpose()) * 0.5;
    }
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = e.values[k].max(floor);
        if lam != 0.0 {
            let v = e.vectors.column(k);
            // out += lam * v v^T
            for j in 0..n {
                let s = lam * v[j];
                for i in 0..n {
                    out[(i, j)] += s * v[i];
                }
            }
        }
    }
    out
}

/// Inverse of a symmetric positive definite matrix via eigendecomposition.
/// Returns the inverse together with the condition number.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let e = sym_eigen(m);
    let min = e.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = e.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min <= 0.0 || !min.is_finite() || !max.is_finite() {
        return None;
    }
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let w = 1.0 / e.values[k];
        let v = e.vectors.column(k);
        for j in 0..n {
            let s = w * v[j];
            for i in 0..n {
                out[(i, j)] += s * v[i];
            }
        }
    }
    Some((out, max / min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn svec_roundtrip_is_isometric() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 4.0]);
        let mut s = vec![0.0; svec_len(3)];
        mat_to_svec(&a, &mut s);
        let b = svec_to_mat(&s, 3);
        assert_relative_eq!((a.clone() - &b).norm(), 0.0, epsilon = 1e-14);
        let frob = a.iter().map(|v| v * v).sum::<f64>();
        let dot = s.iter().map(|v| v * v).sum::<f64>();
        assert_relative_eq!(frob, dot, max_relative = 1e-14);
    }

    #[test]
    fn projection_clips_negative_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // eigs 3, -1
        let p = psd_project(&a, 0.0);
        assert!(min_eigenvalue(&p) >= -1e-12);
        // projection is idempotent for PSD input
        let q = psd_project(&p, 0.0);
        assert_relative_eq!((p - q).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn spd_inverse_matches_solve() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (inv, cond) = spd_inverse(&a).unwrap();
        let id = &a * &inv;
        assert_relative_eq!((id - DMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-12);
        assert!(cond > 1.0 && cond < 10.0);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_inverse(&sing).is_none());
    }
}
