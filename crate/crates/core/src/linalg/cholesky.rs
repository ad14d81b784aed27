use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, DenseMatrix};

const PANEL: usize = 32;

/// Lower Cholesky factor `L` with `L·Lᵀ = A`.
///
/// Only the lower triangle of `a` is read. Blocked left-looking variant: each
/// panel of columns is first updated by all earlier columns, then factored.
pub fn cholesky_factor(a: &DenseMatrix) -> Result<DenseMatrix> {
    check_dim("cholesky: square matrix", a.rows(), a.cols())?;
    let n = a.rows();
    let mut l = a.clone();
    let data = l.as_mut_slice();

    for p in (0..n).step_by(PANEL) {
        let pe = (p + PANEL).min(n);
        let (prev, rest) = data.split_at_mut(p * n);
        let panel = &mut rest[..(pe - p) * n];
        for k in 0..p {
            let lk = &prev[k * n..(k + 1) * n];
            for j in p..pe {
                let ljk = lk[j];
                if ljk != 0.0 {
                    let cj = &mut panel[(j - p) * n..(j - p + 1) * n];
                    axpy(-ljk, &lk[j..], &mut cj[j..]);
                }
            }
        }
        for j in p..pe {
            let (done, cur) = panel.split_at_mut((j - p) * n);
            let cj = &mut cur[..n];
            for k in p..j {
                let lk = &done[(k - p) * n..(k - p + 1) * n];
                let ljk = lk[j];
                if ljk != 0.0 {
                    axpy(-ljk, &lk[j..], &mut cj[j..]);
                }
            }
            let pivot = cj[j];
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
            }
            let d = pivot.sqrt();
            cj[j..].iter_mut().for_each(|v| *v /= d);
        }
    }
    for j in 1..n {
        data[j * n..j * n + j].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(l)
}

/// Solves `L·Lᵀ·X = B` in place for every column of `b`.
pub fn cholesky_solve_in_place(l: &DenseMatrix, b: &mut DenseMatrix) -> Result<()> {
    let n = l.rows();
    check_dim("cholesky solve: right-hand side rows", n, b.rows())?;
    for c in 0..b.cols() {
        let x = b.col_mut(c);
        // L y = b
        for j in 0..n {
            let lj = l.col(j);
            x[j] /= lj[j];
            let xj = x[j];
            if xj != 0.0 {
                axpy(-xj, &lj[j + 1..], &mut x[j + 1..]);
            }
        }
        // Lᵀ x = y
        for j in (0..n).rev() {
            let lj = l.col(j);
            let s = dot(&lj[j + 1..], &x[j + 1..]);
            x[j] = (x[j] - s) / lj[j];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(l: &DenseMatrix) -> DenseMatrix {
        l.matmul(&l.transpose()).unwrap()
    }

    #[test]
    fn identity_factor() {
        let l = cholesky_factor(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(l, DenseMatrix::identity(3));
    }

    #[test]
    fn two_by_two_hand_factor() {
        let a = DenseMatrix::from_rows(&[&[4.0, 2.0], &[2.0, 5.0]]).unwrap();
        let l = cholesky_factor(&a).unwrap();
        let expected = DenseMatrix::from_rows(&[&[2.0, 0.0], &[1.0, 2.0]]).unwrap();
        assert!(l.max_abs_diff(&expected) < 1e-15);
        assert!(reconstruct(&l).max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn indefinite_names_pivot() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        match cholesky_factor(&a) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spans_several_panels() {
        // diagonally dominant, n > 2 panels
        let n = 3 * PANEL + 5;
        let a = DenseMatrix::from_fn(
            n,
            n,
            |i, j| {
                if i == j {
                    n as f64
                } else {
                    1.0 / (1.0 + (i as f64 - j as f64).abs())
                }
            },
        );
        let l = cholesky_factor(&a).unwrap();
        assert!(reconstruct(&l).max_abs_diff(&a) <= 1e-12 * a.norm_inf());
        let mut b = DenseMatrix::from_fn(n, 2, |i, j| (i + j) as f64);
        let rhs = b.clone();
        cholesky_solve_in_place(&l, &mut b).unwrap();
        assert!(a.matmul(&b).unwrap().max_abs_diff(&rhs) < 1e-10);
    }
}
