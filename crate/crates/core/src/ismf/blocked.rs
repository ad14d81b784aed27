use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ismf::{level_pivot, level_update, scale_by_inverse, validate, OpCount};
use crate::linalg::{DenseMatrix, DiagObsCovariance};
use crate::solver::SolverResult;

/// Block-parallel iterative Sherman-Morrison solve.
///
/// Works on `G = [V, D]` (`Nobs × 2·Nens`). The initial scaling runs over
/// contiguous column blocks; at level `t` the pivot vector `h_t` is computed
/// once and columns `t+1..2·Nens` are split into `workers` blocks of
/// `⌈(2·Nens − t) / workers⌉` columns updated concurrently. Each column is
/// updated by the same kernel as the serial solver, so the result does not
/// depend on the worker count.
pub fn ismf_solve_blocked(
    r: &DiagObsCovariance,
    v: &DenseMatrix,
    d: &DenseMatrix,
    workers: usize,
) -> Result<SolverResult> {
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    validate(r, v, d)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let nobs = v.rows();
    let nens = v.cols();
    let total = 2 * nens;
    let mut g = Vec::with_capacity(nobs * total);
    g.extend_from_slice(v.as_slice());
    g.extend_from_slice(d.as_slice());
    let rv = r.values();
    let mut ops = 0u64;

    if nobs > 0 {
        let block = total.div_ceil(workers) * nobs;
        ops += pool.install(|| {
            g.par_chunks_mut(block)
                .map(|blk| blk.chunks_exact_mut(nobs).map(|col| scale_by_inverse(rv, col)).sum::<u64>())
                .sum::<u64>()
        });

        let mut h = vec![0.0; nobs];
        for t in 1..=nens {
            let v_t = v.col(t - 1);
            let (head, tail) = g.split_at_mut(t * nobs);
            ops += level_pivot(t, v_t, &head[(t - 1) * nobs..], &mut h)?;
            let h = &h;
            let block = (total - t).div_ceil(workers) * nobs;
            ops += pool.install(|| {
                tail.par_chunks_mut(block)
                    .map(|blk| blk.chunks_exact_mut(nobs).map(|col| level_update(v_t, h, col)).sum::<u64>())
                    .sum::<u64>()
            });
        }
    }

    let z = DenseMatrix::from_col_major(nobs, nens, g.split_off(nens * nobs))?;
    Ok(SolverResult { z, op_count: Some(OpCount { multiplications_and_divisions: ops }), elapsed: start.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ismf::{ismf_solve, op_count_formula};
    use crate::linalg::{gaussian_matrix, RngStream, RowStd};

    fn instance(nobs: usize, nens: usize, seed: u64) -> (DiagObsCovariance, DenseMatrix, DenseMatrix) {
        let mut rng = RngStream::new(seed);
        let v = gaussian_matrix(&mut rng, nobs, nens, 0.0, RowStd::Scalar(0.5)).unwrap();
        let d = gaussian_matrix(&mut rng, nobs, nens, 0.0, RowStd::Scalar(1.0)).unwrap();
        let r = DiagObsCovariance::new((0..nobs).map(|i| 0.1 + (i % 7) as f64 * 0.05).collect()).unwrap();
        (r, v, d)
    }

    #[test]
    fn single_worker_is_bitwise_serial() {
        let (r, v, d) = instance(50, 5, 1);
        let serial = ismf_solve(&r, &v, &d).unwrap();
        let blocked = ismf_solve_blocked(&r, &v, &d, 1).unwrap();
        assert_eq!(serial.z.as_slice(), blocked.z.as_slice());
        assert_eq!(blocked.op_count, Some(op_count_formula(5, 50)));
    }

    #[test]
    fn worker_count_independent() {
        let (r, v, d) = instance(200, 16, 2);
        let serial = ismf_solve(&r, &v, &d).unwrap().z;
        for workers in [2, 3, 4, 8, 40] {
            let z = ismf_solve_blocked(&r, &v, &d, workers).unwrap().z;
            assert!(z.max_abs_diff(&serial) <= 1e-12, "workers = {workers}");
        }
    }

    #[test]
    fn zero_workers_rejected() {
        let (r, v, d) = instance(4, 2, 3);
        assert!(ismf_solve_blocked(&r, &v, &d, 0).is_err());
    }
}
