use thiserror::Error;

/// Errors raised anywhere in the filter, the models or the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch { context: &'static str, expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("singular rank-one update at level {level}: |1 + v^T u| = {denominator:e}")]
    SingularUpdate { level: usize, denominator: f64 },

    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("recursive oracle limited to {max} ensemble members, got {actual}")]
    OracleSizeExceeded { max: usize, actual: usize },

    #[error("model diverged at step {step}: max |state| = {max_abs:e}")]
    Divergence { step: usize, max_abs: f64 },

    #[error("Helmholtz solve residual {residual:e} above tolerance")]
    SolverNonConvergence { residual: f64 },

    #[error("member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cycle {cycle}, solver {solver}: {source}")]
    Cycle {
        cycle: usize,
        solver: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// `true` when the root cause is a bad configuration rather than a numerical failure.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => true,
            Error::Member { source, .. } | Error::Cycle { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub(crate) fn in_member(self, member: usize) -> Error {
        Error::Member { member, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, actual })
    }
}
