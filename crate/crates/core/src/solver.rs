use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::baseline::{analysis_solve_cholesky, analysis_solve_svd};
use crate::error::{Error, Result};
use crate::ismf::{ismf_solve, ismf_solve_blocked, OpCount};
use crate::linalg::{DenseMatrix, DiagObsCovariance};

/// Solution `Z` of `(R + V·Vᵀ)·Z = D` plus bookkeeping.
#[derive(Clone, Debug)]
pub struct SolverResult {
    pub z: DenseMatrix,
    /// Long-operation count; only the Sherman-Morrison paths are instrumented.
    pub op_count: Option<OpCount>,
    pub elapsed: Duration,
}

/// Analysis-step linear solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Sherman,
    Cholesky,
    Svd,
}

impl SolverChoice {
    pub const ALL: [SolverChoice; 3] = [SolverChoice::Sherman, SolverChoice::Cholesky, SolverChoice::Svd];

    pub fn name(self) -> &'static str {
        match self {
            SolverChoice::Sherman => "sherman",
            SolverChoice::Cholesky => "cholesky",
            SolverChoice::Svd => "svd",
        }
    }
}

impl fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sherman" | "ismf" => Ok(SolverChoice::Sherman),
            "cholesky" | "chol" => Ok(SolverChoice::Cholesky),
            "svd" => Ok(SolverChoice::Svd),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

/// Solves the analysis system with the chosen variant.
///
/// `v_scaled` is `H·S` (deviations carrying `1/√(Nens−1)`), `v_unscaled` is
/// `H·(X − x̄)`. Sherman and Cholesky consume the scaled form, SVD the unscaled
/// one and applies `1/(Nens−1)` itself. `workers > 1` selects the blocked
/// Sherman-Morrison variant.
pub fn solve_analysis_system(
    choice: SolverChoice,
    r: &DiagObsCovariance,
    v_scaled: &DenseMatrix,
    v_unscaled: &DenseMatrix,
    d: &DenseMatrix,
    workers: usize,
) -> Result<SolverResult> {
    match choice {
        SolverChoice::Sherman if workers > 1 => ismf_solve_blocked(r, v_scaled, d, workers),
        SolverChoice::Sherman => ismf_solve(r, v_scaled, d),
        SolverChoice::Cholesky => analysis_solve_cholesky(r, v_scaled, d),
        SolverChoice::Svd => analysis_solve_svd(r, v_unscaled, d),
    }
}
