//! Truth trajectories, observation operators and synthetic observations.

use serde::{Deserialize, Serialize};

use crate::enkf::{EnsembleMatrix, ObservationOperator, Stage};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{gaussian_matrix, DenseMatrix, DiagObsCovariance, RngStream, RowStd};
use crate::models::ModelOperator;

/// Which state components are observed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SelectionStrategy {
    #[default]
    UniformStride,
    Random {
        seed: u64,
    },
}

/// `⌊Pobs·Nstate⌋`, at least one.
pub fn observation_count(nstate: usize, pobs: f64) -> Result<usize> {
    if !(pobs > 0.0 && pobs <= 1.0) {
        return Err(Error::InvalidArgument(format!("Pobs must lie in (0, 1], got {pobs}")));
    }
    Ok(((pobs * nstate as f64 + 1e-9).floor() as usize).clamp(1, nstate.max(1)))
}

/// Observation operator selecting `⌊Pobs·Nstate⌋` components.
///
/// `Pobs = 1` gives the identity. Uniform stride observes `⌊i·Nstate/Nobs⌋`
/// for `i = 0..Nobs`; random picks a sorted sample without replacement.
pub fn build_selection_operator(nstate: usize, pobs: f64, strategy: SelectionStrategy) -> Result<ObservationOperator> {
    selection_with_count(nstate, observation_count(nstate, pobs)?, strategy)
}

/// Observation operator selecting exactly `nobs` components.
pub fn selection_with_count(nstate: usize, nobs: usize, strategy: SelectionStrategy) -> Result<ObservationOperator> {
    if nobs == 0 || nobs > nstate {
        return Err(Error::InvalidArgument(format!("observation count {nobs} must lie in [1, {nstate}]")));
    }
    if nobs == nstate {
        return Ok(ObservationOperator::identity(nstate));
    }
    let indices = match strategy {
        SelectionStrategy::UniformStride => (0..nobs).map(|i| i * nstate / nobs).collect(),
        SelectionStrategy::Random { seed } => {
            let mut rng = RngStream::new(seed);
            let mut idx = rand::seq::index::sample(rng.inner(), nstate, nobs).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    ObservationOperator::selection(nstate, indices)
}

/// `y = H(x_true) + ε` with `ε ~ N(0, diag(r))`.
pub fn synthesize_observation(
    x_true: &[f64],
    h: &ObservationOperator,
    r: &DiagObsCovariance,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    check_dim("observation operator vs dim(r)", r.len(), h.nobs())?;
    let std: Vec<f64> = r.values().iter().map(|v| v.sqrt()).collect();
    let eps = gaussian_matrix(rng, h.nobs(), 1, 0.0, RowStd::PerRow(&std))?;
    Ok(h.apply(x_true)?.iter().zip(eps.as_slice()).map(|(a, e)| a + e).collect())
}

/// Member `i` is `x₀ + ηᵢ` with `ηᵢ ~ N(0, (pct·|x₀|)²)` componentwise.
pub fn build_initial_ensemble_lorenz(
    x_true0: &[f64],
    pct: f64,
    nens: usize,
    rng: &mut RngStream,
) -> Result<EnsembleMatrix> {
    if !(pct > 0.0) || !pct.is_finite() {
        return Err(Error::InvalidArgument(format!("perturbation fraction must be positive, got {pct}")));
    }
    let std: Vec<f64> = x_true0.iter().map(|v| pct * v.abs()).collect();
    let eta = gaussian_matrix(rng, x_true0.len(), nens, 0.0, RowStd::PerRow(&std))?;
    let x = DenseMatrix::from_fn(x_true0.len(), nens, |i, j| x_true0[i] + eta[(i, j)]);
    EnsembleMatrix::new(x, Stage::Background, 0.0)
}

/// Member `i` is `x₀ + εᵢ·C` with `C` the mean absolute value of `x₀` and
/// `εᵢ ~ N(0, STD²)` componentwise.
pub fn build_initial_ensemble_qg(
    x_true0: &[f64],
    std_ens: f64,
    nens: usize,
    rng: &mut RngStream,
) -> Result<EnsembleMatrix> {
    if !(std_ens > 0.0) || !std_ens.is_finite() {
        return Err(Error::InvalidArgument(format!("ensemble spread must be positive, got {std_ens}")));
    }
    let c = if x_true0.is_empty() { 0.0 } else { x_true0.iter().map(|v| v.abs()).sum::<f64>() / x_true0.len() as f64 };
    let eps = gaussian_matrix(rng, x_true0.len(), nens, 0.0, RowStd::Scalar(std_ens))?;
    let x = DenseMatrix::from_fn(x_true0.len(), nens, |i, j| x_true0[i] + eps[(i, j)] * c);
    EnsembleMatrix::new(x, Stage::Background, 0.0)
}

/// Reference solution sampled at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthTrajectory {
    pub model: String,
    pub seed: u64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl TruthTrajectory {
    /// Integrates `model` from `x0` at `times[0]`, recording the state at every entry of `times`.
    pub fn generate<M: ModelOperator + ?Sized>(
        model: &M,
        tag: &str,
        seed: u64,
        x0: Vec<f64>,
        times: &[f64],
    ) -> Result<Self> {
        check_dim("initial truth length vs model", model.state_len(), x0.len())?;
        if times.is_empty() {
            return Err(Error::InvalidArgument("truth needs at least one time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("truth times must be strictly increasing".into()));
        }
        let mut states = Vec::with_capacity(times.len());
        states.push(x0);
        for w in times.windows(2) {
            let n = crate::enkf::steps_between(model.dt(), w[0], w[1])?;
            let next = model.integrate(states.last().expect("non-empty"), n)?;
            states.push(next);
        }
        Ok(Self { model: tag.to_string(), seed, times: times.to_vec(), states })
    }
}

/// Analysis times and observation statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsSchedule {
    pub analysis_times: Vec<f64>,
    pub pobs: f64,
    pub r_value: f64,
}
