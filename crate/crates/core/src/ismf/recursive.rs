//! Literal recursive Sherman-Morrison evaluation of `W(k)⁻¹·x`.
//!
//! `F(x, 0) = R⁻¹x` and, for `k ≥ 1`,
//! `F(x, k) = f − g·(v_kᵀf)/(1 + v_kᵀg)` with `f = F(x, k−1)`, `g = F(v_k, k−1)`.
//! No memoization: the call tree doubles per level, which is the point of
//! keeping it around as a reference for the iterative solver.

use crate::error::{check_dim, Error, Result};
use crate::ismf::SINGULAR_GUARD;
use crate::linalg::{dot, DenseMatrix, DiagObsCovariance};

/// Largest ensemble accepted by the exponential-cost oracle.
pub const MAX_ORACLE_ENS: usize = 8;

/// Call counts collected while recursing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RecursionStats {
    pub calls: usize,
    /// Number of base-level solves `R·g = x`.
    pub base_calls: usize,
    /// `base_calls_per_column[i]`: base-level solves whose right-hand side is `v_{i+1}`.
    pub base_calls_per_column: Vec<usize>,
}

#[derive(Clone, Copy)]
enum Rhs<'a> {
    External(&'a [f64]),
    Column(usize),
}

struct Oracle<'a> {
    r: &'a [f64],
    v: &'a DenseMatrix,
    stats: RecursionStats,
}

impl Oracle<'_> {
    fn eval(&mut self, rhs: Rhs<'_>, k: usize) -> Result<Vec<f64>> {
        self.stats.calls += 1;
        if k == 0 {
            self.stats.base_calls += 1;
            let x = match rhs {
                Rhs::External(x) => x,
                Rhs::Column(i) => {
                    self.stats.base_calls_per_column[i] += 1;
                    self.v.col(i)
                }
            };
            return Ok(x.iter().zip(self.r).map(|(xi, ri)| xi / ri).collect());
        }
        let v_k = self.v.col(k - 1);
        let f = self.eval(rhs, k - 1)?;
        let g = self.eval(Rhs::Column(k - 1), k - 1)?;
        let denom = 1.0 + dot(v_k, &g);
        if !(denom.abs() >= SINGULAR_GUARD) {
            return Err(Error::SingularUpdate { level: k, denominator: denom.abs() });
        }
        let s = dot(v_k, &f) / denom;
        Ok(f.iter().zip(&g).map(|(fi, gi)| fi - gi * s).collect())
    }
}

/// `W(k)⁻¹·x` with `W(k) = diag(r) + Σ_{i≤k} v_i v_iᵀ`, evaluated by literal recursion.
pub fn recursive_sm_solve(r: &DiagObsCovariance, v: &DenseMatrix, x: &[f64], k: usize) -> Result<Vec<f64>> {
    recursive_sm_solve_counted(r, v, x, k).map(|(z, _)| z)
}

/// As [`recursive_sm_solve`], also returning call counts.
pub fn recursive_sm_solve_counted(
    r: &DiagObsCovariance,
    v: &DenseMatrix,
    x: &[f64],
    k: usize,
) -> Result<(Vec<f64>, RecursionStats)> {
    check_dim("rows of V vs dim(r)", r.len(), v.rows())?;
    check_dim("length of x vs dim(r)", r.len(), x.len())?;
    if v.cols() > MAX_ORACLE_ENS {
        return Err(Error::OracleSizeExceeded { max: MAX_ORACLE_ENS, actual: v.cols() });
    }
    if k > v.cols() {
        return Err(Error::InvalidArgument(format!("recursion level {k} exceeds ensemble size {}", v.cols())));
    }
    let mut oracle = Oracle {
        r: r.values(),
        v,
        stats: RecursionStats { base_calls_per_column: vec![0; v.cols()], ..Default::default() },
    };
    let z = oracle.eval(Rhs::External(x), k)?;
    Ok((z, oracle.stats))
}
