//! Dense and diagonal linear algebra shared by the solvers.

mod cholesky;
mod matrix;
mod random;
mod svd;

pub use cholesky::{cholesky_factor, cholesky_solve_in_place};
pub use matrix::{axpy, dot, DenseMatrix};
pub use random::{gaussian_matrix, RngStream, RowStd};
pub use svd::{svd_thin, Svd, SvdMode};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Diagonal observation-error covariance `R = diag(r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagObsCovariance {
    r: Vec<f64>,
}

impl DiagObsCovariance {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = r.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "observation variance r[{i}] = {v} must be positive and finite"
            )));
        }
        Ok(Self { r })
    }

    pub fn uniform(nobs: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; nobs])
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.r
    }
}

/// `W = alpha·V·Vᵀ + beta·diag(r)`, returned as a full symmetric matrix.
pub fn sym_rank_k_update(v: &DenseMatrix, r: &DiagObsCovariance, alpha: f64, beta: f64) -> Result<DenseMatrix> {
    let n = v.rows();
    check_dim("sym_rank_k_update: rows of V vs dim(r)", r.len(), n)?;
    let mut w = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let wj = &mut w.col_mut(j)[j..];
        if alpha != 0.0 {
            for k in 0..v.cols() {
                let vk = v.col(k);
                let a = alpha * vk[j];
                if a != 0.0 {
                    axpy(a, &vk[j..], wj);
                }
            }
        }
        wj[0] += beta * r.values()[j];
    }
    for j in 0..n {
        for i in 0..j {
            w[(i, j)] = w[(j, i)];
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_zero_case() {
        let v = DenseMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let r = DiagObsCovariance::new(vec![1.0, 2.0, 3.0]).unwrap();
        let w = sym_rank_k_update(&v, &r, 0.0, 1.0).unwrap();
        let mut d = DenseMatrix::zeros(3, 3);
        for i in 0..3 {
            d[(i, i)] = r.values()[i];
        }
        assert_eq!(w, d);
    }

    #[test]
    fn single_unit_column() {
        let v = DenseMatrix::from_rows(&[&[1.0], &[0.0], &[0.0]]).unwrap();
        let r = DiagObsCovariance::uniform(3, 1.0).unwrap();
        let w = sym_rank_k_update(&v, &r, 1.0, 1.0).unwrap();
        let mut expected = DenseMatrix::identity(3);
        expected[(0, 0)] = 2.0;
        assert_eq!(w, expected);
    }

    #[test]
    fn matches_triple_loop() {
        let nens = 5;
        let v = DenseMatrix::from_fn(7, nens, |i, j| ((3 * i + 5 * j) as f64 * 0.37).sin());
        let r = DiagObsCovariance::new((0..7).map(|i| 0.5 + i as f64).collect()).unwrap();
        let alpha = 1.0 / (nens as f64 - 1.0);
        let w = sym_rank_k_update(&v, &r, alpha, 1.0).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let mut s = 0.0;
                for k in 0..nens {
                    s += v[(i, k)] * v[(j, k)];
                }
                let expected = alpha * s + if i == j { r.values()[i] } else { 0.0 };
                assert!((w[(i, j)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dimension_and_positivity_checks() {
        let v = DenseMatrix::zeros(3, 1);
        let r = DiagObsCovariance::uniform(2, 1.0).unwrap();
        assert!(sym_rank_k_update(&v, &r, 1.0, 1.0).is_err());
        assert!(DiagObsCovariance::new(vec![1.0, 0.0]).is_err());
        assert!(DiagObsCovariance::new(vec![f64::NAN]).is_err());
    }
}
