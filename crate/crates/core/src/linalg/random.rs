use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::DenseMatrix;

/// Deterministic random stream.
///
/// Backed by ChaCha20 (a counter-based generator) seeded through
/// `SeedableRng::seed_from_u64`; normals come from the ziggurat sampler of
/// `rand_distr::StandardNormal`. A `(seed, stream)` pair always yields the same
/// sequence on every platform.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Independent stream `stream` derived from the same seed.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub(crate) fn inner(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

/// Standard deviation specification for [`gaussian_matrix`].
#[derive(Clone, Copy, Debug)]
pub enum RowStd<'a> {
    Scalar(f64),
    PerRow(&'a [f64]),
}

/// Matrix of i.i.d. normal entries, `N(mean, std_i²)` in row `i`.
///
/// Entries are drawn in column-major order, so column `j` of a call with `cols`
/// columns equals the `j`-th column drawn by repeated single-column calls.
pub fn gaussian_matrix(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    mean: f64,
    std: RowStd<'_>,
) -> Result<DenseMatrix> {
    let std_of = |i: usize| match std {
        RowStd::Scalar(s) => s,
        RowStd::PerRow(s) => s[i],
    };
    if let RowStd::PerRow(s) = std {
        check_dim("per-row std length", rows, s.len())?;
    }
    for i in 0..rows {
        let s = std_of(i);
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "standard deviation must be finite and non-negative, row {i} has {s}"
            )));
        }
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..cols {
        for i in 0..rows {
            data.push(mean + std_of(i) * rng.standard_normal());
        }
    }
    DenseMatrix::from_col_major(rows, cols, data)
}
