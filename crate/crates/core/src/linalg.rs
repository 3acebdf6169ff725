//! Small dense symmetric-matrix helpers.
//!
//! Covariance and curvature matrices in this crate are tiny (p <= ~10), so
//! everything here goes through a full symmetric eigendecomposition.
//! Inversion uses an eigenvalue floor and errors below it instead of
//! regularizing, so identity checks are never silently corrupted.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigenvalue floor below which a matrix is treated as singular.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Eigenvalues and eigenvectors of a symmetric matrix, ascending order.
///
/// The input is symmetrized as `(A + A^T)/2` first so that accumulated
/// round-off in Monte-Carlo averages cannot feed an asymmetric matrix to
/// the decomposition.
pub fn sym_eigen(m: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "sym_eigen requires a square matrix");
    let a = to_nalgebra(m);
    let sym = (&a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();

    // nalgebra does not promise an eigenvalue order; sort ascending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let values = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = eig.eigenvectors[(row, k)];
        }
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Array2<f64>) -> f64 {
    sym_eigen(m).0[0]
}

/// Eigenvector associated with the smallest eigenvalue.
pub fn min_eigenvector(m: &Array2<f64>) -> Array1<f64> {
    let (_, vectors) = sym_eigen(m);
    vectors.column(0).to_owned()
}

/// Inverse of a symmetric positive-definite matrix via eigendecomposition.
///
/// Errors if any eigenvalue falls below [`EIGENVALUE_FLOOR`].
pub fn sym_inverse(m: &Array2<f64>) -> Result<Array2<f64>> {
    let (values, vectors) = sym_eigen(m);
    if let Some(&lambda) = values.iter().find(|v| **v < EIGENVALUE_FLOOR) {
        return Err(Error::SingularMatrix {
            value: lambda,
            floor: EIGENVALUE_FLOOR,
            hint: "matrix is not positive definite at the requested tolerance",
        });
    }
    let n = m.nrows();
    let mut inv = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += vectors[[i, k]] * vectors[[j, k]] / values[k];
            }
            inv[[i, j]] = acc;
        }
    }
    Ok(inv)
}

/// Solve `A x = b` for symmetric positive-definite `A` with the same
/// eigenvalue floor as [`sym_inverse`].
pub fn sym_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    Ok(sym_inverse(a)?.dot(b))
}

/// Quadratic form `v^T M v`.
pub fn quadratic_form(m: &Array2<f64>, v: &Array1<f64>) -> f64 {
    v.dot(&m.dot(v))
}

/// Trace of a square matrix.
pub fn trace(m: &Array2<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[[i, i]]).sum()
}

/// Ordinary least squares slope and intercept of y on x.
pub fn ls_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_of_diagonal() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        let (values, _) = sym_eigen(&m);
        assert!((values[0] - 1.0).abs() < 1e-12);
        assert!((values[1] - 3.0).abs() < 1e-12);
        assert!((min_eigenvalue(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_known_2x2() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let (values, vectors) = sym_eigen(&m);
        assert!((values[0] - 1.0).abs() < 1e-12);
        assert!((values[1] - 3.0).abs() < 1e-12);
        // eigenvector for 1 is (1,-1)/sqrt(2) up to sign
        let v = vectors.column(0);
        assert!((v[0] + v[1]).abs() < 1e-10);
    }

    #[test]
    fn inverse_round_trip() {
        let m = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let inv = sym_inverse(&m).unwrap();
        let prod = m.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn inverse_rejects_singular() {
        let m = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(sym_inverse(&m), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn slope_of_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        let (slope, intercept) = ls_slope(&x, &y);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!(intercept.abs() < 1e-12);
    }
}
