//! One-sided (Hestenes) Jacobi SVD.
//!
//! Columns of a working copy of `A` are rotated pairwise until mutually
//! orthogonal; the accumulated rotations form `V`, the column norms are the
//! singular values and the normalized columns form `U`. Accurate to working
//! precision for the tall, skinny matrices met in the analysis step.

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};

/// Shape of the left factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvdMode {
    /// `U` is `rows × min(rows, cols)`.
    Thin,
    /// `U` is square `rows × rows`, completed with an orthonormal basis.
    FullLeft,
}

#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    /// Singular values, descending.
    pub sigma: Vec<f64>,
    /// `cols × min(rows, cols)`.
    pub v: DenseMatrix,
}

const ORTHO_TOL: f64 = 1e-15;

pub fn svd_thin(a: &DenseMatrix, mode: SvdMode) -> Result<Svd> {
    let (m, n) = a.shape();
    if m >= n {
        let (u, sigma, v) = jacobi_tall(a)?;
        let u = match mode {
            SvdMode::Thin => u,
            SvdMode::FullLeft => complete_basis(u, m),
        };
        Ok(Svd { u, sigma, v })
    } else {
        // A = (Aᵀ)ᵀ = (U' Σ V'ᵀ)ᵀ = V' Σ U'ᵀ; V' is already square m×m
        let (u_t, sigma, v_t) = jacobi_tall(&a.transpose())?;
        Ok(Svd { u: v_t, sigma, v: u_t })
    }
}

/// Returns `(U m×n, σ, V n×n)` for `m ≥ n`.
fn jacobi_tall(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);
    let max_sweeps = 100 * n.max(1);

    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == max_sweeps {
            return Err(Error::SvdNoConvergence { sweeps });
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(w.col(p), w.col(p));
                let beta = dot(w.col(q), w.col(q));
                let gamma = dot(w.col(p), w.col(q));
                if gamma == 0.0 || gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }

    let mut sigma: Vec<f64> = (0..n).map(|j| dot(w.col(j), w.col(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));

    let smax = order.first().map_or(0.0, |&i| sigma[i]);
    let cutoff = smax * (m.max(n) as f64) * f64::EPSILON;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_sorted = DenseMatrix::zeros(n, n);
    let mut rank_cols = 0;
    for (dst, &src) in order.iter().enumerate() {
        v_sorted.col_mut(dst).copy_from_slice(v.col(src));
        if sigma[src] > cutoff && sigma[src] > 0.0 {
            let s = sigma[src];
            u_cols.push(w.col(src).iter().map(|x| x / s).collect());
            rank_cols += 1;
        }
    }
    sigma = order.iter().map(|&i| sigma[i]).collect();

    let mut u = DenseMatrix::from_columns(&u_cols)?;
    if u_cols.is_empty() {
        u = DenseMatrix::zeros(m, 0);
    }
    if rank_cols < n {
        u = complete_basis(u, n);
    }
    Ok((u, sigma, v_sorted))
}

#[inline]
fn rotate(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * rows);
    let cp = &mut head[p * rows..(p + 1) * rows];
    let cq = &mut tail[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Extends the orthonormal columns of `u` to `target` columns using
/// twice-orthogonalized unit vectors.
fn complete_basis(u: DenseMatrix, target: usize) -> DenseMatrix {
    let m = u.rows();
    let mut cols: Vec<Vec<f64>> = u.columns().map(|c| c.to_vec()).collect();
    let mut candidate = 0;
    while cols.len() < target && candidate < m {
        let mut e = vec![0.0; m];
        e[candidate] = 1.0;
        candidate += 1;
        for _ in 0..2 {
            for c in &cols {
                let proj = dot(c, &e);
                e.iter_mut().zip(c).for_each(|(x, ci)| *x -= proj * ci);
            }
        }
        let norm = dot(&e, &e).sqrt();
        if norm > 0.5 {
            e.iter_mut().for_each(|x| *x /= norm);
            cols.push(e);
        }
    }
    DenseMatrix::from_columns(&cols).expect("equal column lengths")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(s: &Svd) -> DenseMatrix {
        let k = s.sigma.len().min(s.u.cols());
        let mut us = DenseMatrix::zeros(s.u.rows(), k);
        for j in 0..k {
            let c: Vec<f64> = s.u.col(j).iter().map(|x| x * s.sigma[j]).collect();
            us.col_mut(j).copy_from_slice(&c);
        }
        let vk = DenseMatrix::from_fn(s.v.rows(), k, |i, j| s.v[(i, j)]);
        us.matmul(&vk.transpose()).unwrap()
    }

    fn orthogonality_error(q: &DenseMatrix) -> f64 {
        q.t_matmul(q).unwrap().max_abs_diff(&DenseMatrix::identity(q.cols()))
    }

    #[test]
    fn diagonal_input() {
        let a = DenseMatrix::from_rows(&[&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]).unwrap();
        let s = svd_thin(&a, SvdMode::Thin).unwrap();
        assert_eq!(s.sigma, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn zero_matrix() {
        let s = svd_thin(&DenseMatrix::zeros(4, 2), SvdMode::Thin).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        assert_eq!(s.u.shape(), (4, 2));
        assert!(orthogonality_error(&s.u) < 1e-15);
    }

    #[test]
    fn random_reconstruction_and_full_left() {
        let a = DenseMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) as f64).sin() + 0.1 * j as f64);
        let s = svd_thin(&a, SvdMode::Thin).unwrap();
        assert!(reconstruct(&s).max_abs_diff(&a) <= 1e-10 * a.max_abs());
        assert!(orthogonality_error(&s.u) < 1e-10);
        assert!(orthogonality_error(&s.v) < 1e-10);
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));

        let f = svd_thin(&a, SvdMode::FullLeft).unwrap();
        assert_eq!(f.u.shape(), (6, 6));
        assert!(orthogonality_error(&f.u) < 1e-10);
    }

    #[test]
    fn wide_matrix_goes_through_transpose() {
        let a = DenseMatrix::from_fn(3, 7, |i, j| ((i * 5 + j * 11) as f64).cos());
        let s = svd_thin(&a, SvdMode::Thin).unwrap();
        assert_eq!(s.u.shape(), (3, 3));
        assert_eq!(s.v.shape(), (7, 3));
        assert!(reconstruct(&s).max_abs_diff(&a) <= 1e-10 * a.max_abs());
    }

    #[test]
    fn rank_deficient_keeps_orthonormal_u() {
        // two identical columns
        let a = DenseMatrix::from_fn(5, 3, |i, j| if j == 2 { i as f64 } else { (i + j) as f64 });
        let a = DenseMatrix::from_fn(5, 3, |i, j| if j == 1 { a[(i, 0)] } else { a[(i, j)] });
        let s = svd_thin(&a, SvdMode::Thin).unwrap();
        assert!(orthogonality_error(&s.u) < 1e-10);
        assert!(reconstruct(&s).max_abs_diff(&a) <= 1e-10 * a.max_abs());
    }
}
