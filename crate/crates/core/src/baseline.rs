//! Decomposition-based baselines for the analysis system `W·Z = D`.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::ismf::validate;
use crate::linalg::{
    cholesky_factor, cholesky_solve_in_place, svd_thin, sym_rank_k_update, DenseMatrix, DiagObsCovariance, SvdMode,
};
use crate::solver::SolverResult;

/// Forms `W = diag(r) + V·Vᵀ` densely, factors it and solves all columns of `D`.
///
/// `V` carries the `1/√(Nens−1)` factor. Memory is `O(Nobs²)`.
pub fn analysis_solve_cholesky(r: &DiagObsCovariance, v: &DenseMatrix, d: &DenseMatrix) -> Result<SolverResult> {
    validate(r, v, d)?;
    let start = Instant::now();
    let w = sym_rank_k_update(v, r, 1.0, 1.0)?;
    let l = cholesky_factor(&w)?;
    drop(w);
    let mut z = d.clone();
    cholesky_solve_in_place(&l, &mut z)?;
    Ok(SolverResult { z, op_count: None, elapsed: start.elapsed() })
}

/// SVD solution of `(diag(r) + V̂·V̂ᵀ/(Nens−1))·Z = D` with unscaled `V̂ = H·(X − x̄)`.
///
/// With `√R⁻¹·V̂ = Û·Σ·Ṽᵀ` (thin), the inverse is
/// `√R⁻¹·(Û·(diag{(σᵢ²/(Nens−1) + 1)⁻¹} − I)·Ûᵀ + I)·√R⁻¹`; the identity term
/// stands in for the orthogonal complement of `Û`, so no `Nobs × Nobs` factor
/// is ever built.
pub fn analysis_solve_svd(r: &DiagObsCovariance, v_unscaled: &DenseMatrix, d: &DenseMatrix) -> Result<SolverResult> {
    validate(r, v_unscaled, d)?;
    let nens = v_unscaled.cols();
    if nens < 2 {
        return Err(Error::InvalidArgument("SVD solver needs at least two ensemble members".into()));
    }
    let start = Instant::now();
    let inv_sqrt_r: Vec<f64> = r.values().iter().map(|x| 1.0 / x.sqrt()).collect();
    let scale_rows = |m: &mut DenseMatrix| {
        for j in 0..m.cols() {
            m.col_mut(j).iter_mut().zip(&inv_sqrt_r).for_each(|(x, s)| *x *= s);
        }
    };

    let mut b = v_unscaled.clone();
    scale_rows(&mut b);
    let svd = svd_thin(&b, SvdMode::Thin)?;

    let mut e = d.clone();
    scale_rows(&mut e);
    let mut t = svd.u.t_matmul(&e)?;
    let denom = (nens - 1) as f64;
    for i in 0..t.rows() {
        let coef = 1.0 / (svd.sigma[i] * svd.sigma[i] / denom + 1.0) - 1.0;
        for j in 0..t.cols() {
            t[(i, j)] *= coef;
        }
    }
    let mut z = e.add(&svd.u.matmul(&t)?)?;
    scale_rows(&mut z);
    Ok(SolverResult { z, op_count: None, elapsed: start.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ismf::ismf_solve;
    use crate::linalg::{gaussian_matrix, RngStream, RowStd};

    fn random_instance(nobs: usize, nens: usize, seed: u64) -> (DiagObsCovariance, DenseMatrix, DenseMatrix) {
        let mut rng = RngStream::new(seed);
        let v = gaussian_matrix(&mut rng, nobs, nens, 0.0, RowStd::Scalar(1.0)).unwrap();
        let d = gaussian_matrix(&mut rng, nobs, nens, 0.0, RowStd::Scalar(1.0)).unwrap();
        let r = DiagObsCovariance::new((0..nobs).map(|_| 0.2 + rng.uniform()).collect()).unwrap();
        (r, v, d)
    }

    #[test]
    fn cholesky_vanishing_v() {
        let r = DiagObsCovariance::new(vec![2.0, 4.0]).unwrap();
        let d = DenseMatrix::from_rows(&[&[2.0, 4.0], &[8.0, 4.0]]).unwrap();
        let z = analysis_solve_cholesky(&r, &DenseMatrix::zeros(2, 2), &d).unwrap().z;
        let expected = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(z.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn cholesky_scalar() {
        let r = DiagObsCovariance::uniform(1, 1.0).unwrap();
        let one = DenseMatrix::from_rows(&[&[1.0]]).unwrap();
        let z = analysis_solve_cholesky(&r, &one, &one).unwrap().z;
        assert!((z[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn svd_vanishing_v() {
        let r = DiagObsCovariance::new(vec![2.0, 4.0, 0.5]).unwrap();
        let d = DenseMatrix::from_fn(3, 2, |i, j| (i + j + 1) as f64);
        let z = analysis_solve_svd(&r, &DenseMatrix::zeros(3, 2), &d).unwrap().z;
        let expected = DenseMatrix::from_fn(3, 2, |i, j| d[(i, j)] / r.values()[i]);
        assert!(z.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn svd_rank_one_closed_form() {
        // r = 1, V̂ = [v, 0] with Nens = 2: W = I + v vᵀ, so W⁻¹v = v / (1 + ‖v‖²)
        let v = [1.0, -2.0, 0.5, 3.0];
        let vhat = DenseMatrix::from_fn(4, 2, |i, j| if j == 0 { v[i] } else { 0.0 });
        let d = DenseMatrix::from_fn(4, 2, |i, _| v[i]);
        let r = DiagObsCovariance::uniform(4, 1.0).unwrap();
        let z = analysis_solve_svd(&r, &vhat, &d).unwrap().z;
        let n2: f64 = v.iter().map(|x| x * x).sum();
        for i in 0..4 {
            assert!((z[(i, 0)] - v[i] / (1.0 + n2)).abs() < 1e-14);
        }
    }

    #[test]
    fn cross_solver_agreement() {
        let (r, v, d) = random_instance(50, 8, 9);
        let sher = ismf_solve(&r, &v, &d).unwrap().z;
        let chol = analysis_solve_cholesky(&r, &v, &d).unwrap().z;
        let vhat = v.scaled(7f64.sqrt());
        let svd = analysis_solve_svd(&r, &vhat, &d).unwrap().z;
        assert!(sher.max_abs_diff(&chol) <= 1e-10 * sher.max_abs());
        assert!(sher.max_abs_diff(&svd) <= 1e-9 * sher.max_abs());
    }

    #[test]
    fn thin_matches_full_left_formula() {
        let (r, vhat, d) = random_instance(12, 4, 21);
        let thin = analysis_solve_svd(&r, &vhat, &d).unwrap().z;

        // literal formula with square U: Z = √R⁻¹ U diag{(σ²/(n−1)+1)⁻¹} Uᵀ √R⁻¹ D
        let s = r.values().iter().map(|x| 1.0 / x.sqrt()).collect::<Vec<_>>();
        let b = DenseMatrix::from_fn(12, 4, |i, j| vhat[(i, j)] * s[i]);
        let full = svd_thin(&b, SvdMode::FullLeft).unwrap();
        let inner = DenseMatrix::from_fn(12, 12, |i, j| {
            if i != j {
                0.0
            } else if i < 4 {
                1.0 / (full.sigma[i] * full.sigma[i] / 3.0 + 1.0)
            } else {
                1.0
            }
        });
        let e = DenseMatrix::from_fn(12, 4, |i, j| d[(i, j)] * s[i]);
        let y = full.u.matmul(&inner).unwrap().matmul(&full.u.t_matmul(&e).unwrap()).unwrap();
        let literal = DenseMatrix::from_fn(12, 4, |i, j| y[(i, j)] * s[i]);
        assert!(thin.max_abs_diff(&literal) <= 1e-9 * literal.max_abs());
    }

    #[test]
    fn svd_needs_two_members() {
        let r = DiagObsCovariance::uniform(2, 1.0).unwrap();
        let m = DenseMatrix::zeros(2, 1);
        assert!(analysis_solve_svd(&r, &m, &m).is_err());
    }
}
