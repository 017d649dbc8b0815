//! Small dense linear-algebra helpers over `ndarray`, backed by `nalgebra`
//! decompositions.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn check_square(a: ArrayView2<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            what: "square matrix columns",
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    Ok(())
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_square(a)?;
    let chol = to_na(a)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    Ok(from_na(&chol.l()))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_square(a)?;
    let chol = to_na(a)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let inv = chol.inverse();
    let mut out = from_na(&inv);
    symmetrize(&mut out);
    Ok(out)
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    check_square(a)?;
    let eig = to_na(a).symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

pub fn min_eigenvalue(a: ArrayView2<f64>) -> Result<f64> {
    Ok(symmetric_eigen(a)?.0[0])
}

/// Symmetric square root of the inverse, `A^{-1/2}`, for SPD `A`.
pub fn inverse_sqrt(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (vals, vecs) = symmetric_eigen(a)?;
    if vals[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {}", vals[0])));
    }
    let scaled = &vecs * &vals.mapv(|v| 1.0 / v.sqrt());
    let mut out = scaled.dot(&vecs.t());
    symmetrize(&mut out);
    Ok(out)
}

pub(crate) fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
}

/// Column means.
pub fn column_means(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}

/// Population (divide-by-n) column standard deviations.
pub fn column_sds(x: ArrayView2<f64>) -> Array1<f64> {
    x.std_axis(Axis(0), 0.0)
}

/// Covariance with divisor `n` (maximum-likelihood form).
pub fn covariance(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let centered = &x - &column_means(x);
    let mut c = centered.t().dot(&centered) / n;
    symmetrize(&mut c);
    c
}

/// Correlation matrix implied by a covariance matrix.
pub fn correlation_from_covariance(cov: ArrayView2<f64>) -> Array2<f64> {
    let sd = cov.diag().mapv(f64::sqrt);
    Array2::from_shape_fn(cov.raw_dim(), |(i, j)| cov[[i, j]] / (sd[i] * sd[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let a = array![[2.0, 0.5, 0.1], [0.5, 1.5, -0.3], [0.1, -0.3, 1.0]];
        let r = inverse_sqrt(a.view()).unwrap();
        let inv = spd_inverse(a.view()).unwrap();
        let rr = r.dot(&r);
        for (x, y) in rr.iter().zip(inv.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(a.view()).is_err());
        assert!(inverse_sqrt(a.view()).is_err());
    }

    #[test]
    fn eigenvalues_sorted() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let (v, _) = symmetric_eigen(a.view()).unwrap();
        assert_eq!(v.to_vec(), vec![1.0, 3.0]);
    }
}
