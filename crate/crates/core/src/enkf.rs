//! Stochastic ensemble Kalman filter: ensemble statistics, perturbed
//! observations, the analysis step with a pluggable solver, forecast,
//! inflation and partial localization.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::ismf::{ismf_solve_into, OpCount};
use crate::linalg::{gaussian_matrix, DenseMatrix, DiagObsCovariance, RngStream, RowStd};
use crate::models::ModelOperator;
use crate::solver::{solve_analysis_system, SolverChoice, SolverResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Background,
    Analysis,
}

/// Ensemble of model states, one member per column.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleMatrix {
    pub x: DenseMatrix,
    pub stage: Stage,
    pub time: f64,
}

impl EnsembleMatrix {
    pub fn new(x: DenseMatrix, stage: Stage, time: f64) -> Result<Self> {
        x.ensure_finite("ensemble")?;
        Ok(Self { x, stage, time })
    }

    pub fn nstate(&self) -> usize {
        self.x.rows()
    }

    pub fn nens(&self) -> usize {
        self.x.cols()
    }

    pub fn member(&self, j: usize) -> &[f64] {
        self.x.col(j)
    }

    pub fn mean(&self) -> Vec<f64> {
        ensemble_mean(self)
    }
}

/// `S = (X − x̄·1ᵀ)/√(Nens−1)`, so that `S·Sᵀ` is the sample covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationMatrix {
    pub s: DenseMatrix,
}

/// Observation vector with its per-member perturbed copies.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationBatch {
    pub y: Vec<f64>,
    /// `Y = y·1ᵀ + Υ`.
    pub perturbed: DenseMatrix,
    /// `Υ`, one perturbation per member.
    pub perturbations: DenseMatrix,
}

impl ObservationBatch {
    pub fn nobs(&self) -> usize {
        self.y.len()
    }
}

/// Linear observation operator selecting state components.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservationOperator {
    Identity { nstate: usize },
    Selection { nstate: usize, indices: Vec<usize> },
}

impl ObservationOperator {
    pub fn identity(nstate: usize) -> Self {
        ObservationOperator::Identity { nstate }
    }

    /// Selection of `indices`, which must be strictly increasing and below `nstate`.
    pub fn selection(nstate: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("observation indices must be strictly increasing".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= nstate {
                return Err(Error::InvalidArgument(format!(
                    "observation index {last} out of range for state of length {nstate}"
                )));
            }
        }
        Ok(ObservationOperator::Selection { nstate, indices })
    }

    pub fn nstate(&self) -> usize {
        match self {
            ObservationOperator::Identity { nstate } | ObservationOperator::Selection { nstate, .. } => *nstate,
        }
    }

    pub fn nobs(&self) -> usize {
        match self {
            ObservationOperator::Identity { nstate } => *nstate,
            ObservationOperator::Selection { indices, .. } => indices.len(),
        }
    }

    /// State index observed by observation `j`.
    pub fn index(&self, j: usize) -> usize {
        match self {
            ObservationOperator::Identity { .. } => j,
            ObservationOperator::Selection { indices, .. } => indices[j],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("state length vs observation operator", self.nstate(), x.len())?;
        Ok(match self {
            ObservationOperator::Identity { .. } => x.to_vec(),
            ObservationOperator::Selection { indices, .. } => indices.iter().map(|&i| x[i]).collect(),
        })
    }

    /// Applies the operator to every column.
    pub fn apply_matrix(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("state rows vs observation operator", self.nstate(), x.rows())?;
        match self {
            ObservationOperator::Identity { .. } => Ok(x.clone()),
            ObservationOperator::Selection { indices, .. } => {
                Ok(DenseMatrix::from_fn(indices.len(), x.cols(), |i, j| x[(indices[i], j)]))
            }
        }
    }

    /// `Hᵀ·y`: scatters observations back into a zero state vector.
    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim("observation length vs observation operator", self.nobs(), y.len())?;
        let mut x = vec![0.0; self.nstate()];
        for (j, &v) in y.iter().enumerate() {
            x[self.index(j)] = v;
        }
        Ok(x)
    }
}

/// Localization weights `δ_{i,j}` between state component `i` and observation `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceMatrix {
    delta: DenseMatrix,
}

impl InfluenceMatrix {
    pub fn new(delta: DenseMatrix) -> Result<Self> {
        if delta.as_slice().iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::InvalidArgument("influence weights must lie in [0, 1]".into()));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> &DenseMatrix {
        &self.delta
    }
}

/// Cyclic index distance `min(|i − p|, n − |i − p|)`.
pub fn cyclic_distance(i: usize, p: usize, n: usize) -> usize {
    let d = i.abs_diff(p);
    d.min(n - d)
}

/// `δ_{i,j} = exp(−d(i, idx_j)/Nstate)` with the cyclic index distance.
pub fn influence_matrix_cyclic(nstate: usize, nobs: usize, h: &ObservationOperator) -> Result<InfluenceMatrix> {
    influence_matrix_cyclic_scaled(nstate, nobs, h, nstate as f64, None)
}

/// As [`influence_matrix_cyclic`] with a custom length scale and an optional
/// cutoff beyond which the weight is zero.
pub fn influence_matrix_cyclic_scaled(
    nstate: usize,
    nobs: usize,
    h: &ObservationOperator,
    scale: f64,
    cutoff: Option<usize>,
) -> Result<InfluenceMatrix> {
    check_dim("state length vs observation operator", h.nstate(), nstate)?;
    check_dim("observation count vs observation operator", h.nobs(), nobs)?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("localization scale must be positive, got {scale}")));
    }
    let delta = DenseMatrix::from_fn(nstate, nobs, |i, j| {
        let d = cyclic_distance(i, h.index(j), nstate);
        match cutoff {
            Some(c) if d > c => 0.0,
            _ => (-(d as f64) / scale).exp(),
        }
    });
    Ok(InfluenceMatrix { delta })
}

pub fn ensemble_mean(x: &EnsembleMatrix) -> Vec<f64> {
    let n = x.nens() as f64;
    let mut mean = vec![0.0; x.nstate()];
    for col in x.x.columns() {
        mean.iter_mut().zip(col).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn centered(x: &EnsembleMatrix) -> Result<DenseMatrix> {
    if x.nens() < 2 {
        return Err(Error::InvalidArgument(format!("ensemble statistics need at least two members, got {}", x.nens())));
    }
    let mean = ensemble_mean(x);
    let mut c = x.x.clone();
    for j in 0..c.cols() {
        c.col_mut(j).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    Ok(c)
}

pub fn member_deviations(x: &EnsembleMatrix) -> Result<DeviationMatrix> {
    let c = centered(x)?;
    Ok(DeviationMatrix { s: c.scaled(1.0 / ((x.nens() - 1) as f64).sqrt()) })
}

/// Column `j` is `y + ε_j` with `ε_j ~ N(0, diag(r))`.
pub fn perturb_observations(
    y: &[f64],
    r: &DiagObsCovariance,
    nens: usize,
    rng: &mut RngStream,
) -> Result<ObservationBatch> {
    check_dim("observation length vs dim(r)", r.len(), y.len())?;
    let std: Vec<f64> = r.values().iter().map(|v| v.sqrt()).collect();
    let perturbations = gaussian_matrix(rng, y.len(), nens, 0.0, RowStd::PerRow(&std))?;
    let perturbed = DenseMatrix::from_fn(y.len(), nens, |i, j| y[i] + perturbations[(i, j)]);
    Ok(ObservationBatch { y: y.to_vec(), perturbed, perturbations })
}

/// `D = Y − H(X)`.
pub fn innovations(obs: &ObservationBatch, h: &ObservationOperator, x: &EnsembleMatrix) -> Result<DenseMatrix> {
    check_dim("observations vs observation operator", h.nobs(), obs.nobs())?;
    check_dim("perturbed copies vs ensemble size", x.nens(), obs.perturbed.cols())?;
    let mut d = DenseMatrix::zeros(0, 0);
    innovations_into(obs, h, x, &mut d);
    Ok(d)
}

fn innovations_into(obs: &ObservationBatch, h: &ObservationOperator, x: &EnsembleMatrix, d: &mut DenseMatrix) {
    d.copy_from(&obs.perturbed);
    for j in 0..d.cols() {
        let xj = x.x.col(j);
        for (i, v) in d.col_mut(j).iter_mut().enumerate() {
            *v -= xj[h.index(i)];
        }
    }
}

/// Analysis ensemble together with the solver bookkeeping.
#[derive(Clone, Debug)]
pub struct AnalysisOutcome {
    pub ensemble: EnsembleMatrix,
    pub solve: SolverResult,
}

/// `X^A = X^B + S·(Vᵀ·Z)` with `Z` from the chosen solver.
///
/// With localization the correction is `(Δ ∘ (S·Vᵀ))·Z`.
pub fn analysis_step(
    x: &EnsembleMatrix,
    obs: &ObservationBatch,
    h: &ObservationOperator,
    r: &DiagObsCovariance,
    solver: SolverChoice,
    localization: Option<&InfluenceMatrix>,
) -> Result<EnsembleMatrix> {
    analysis_step_with_workers(x, obs, h, r, solver, localization, 1).map(|o| o.ensemble)
}

/// As [`analysis_step`]; `workers > 1` uses the blocked Sherman-Morrison solver.
pub fn analysis_step_with_workers(
    x: &EnsembleMatrix,
    obs: &ObservationBatch,
    h: &ObservationOperator,
    r: &DiagObsCovariance,
    solver: SolverChoice,
    localization: Option<&InfluenceMatrix>,
    workers: usize,
) -> Result<AnalysisOutcome> {
    let mut ensemble = x.clone();
    let mut ws = AnalysisWorkspace::default();
    let stats = analysis_update(&mut ensemble, &mut ws, obs, h, r, solver, localization, workers)?;
    Ok(AnalysisOutcome { ensemble, solve: SolverResult { z: ws.z, op_count: stats.op_count, elapsed: stats.elapsed } })
}

/// Scratch matrices for [`analysis_update`], kept between cycles so repeated
/// analyses of one size allocate nothing large.
#[derive(Clone, Debug, Default)]
pub struct AnalysisWorkspace {
    s: DenseMatrix,
    v: DenseMatrix,
    d: DenseMatrix,
    z: DenseMatrix,
    u: DenseMatrix,
    h: Vec<f64>,
    correction: DenseMatrix,
}

/// Solver bookkeeping of one [`analysis_update`].
#[derive(Clone, Copy, Debug)]
pub struct AnalysisStats {
    pub op_count: Option<OpCount>,
    pub elapsed: Duration,
}

/// In-place analysis: `x` becomes `X^A`. On error `x` may be partly updated.
#[allow(clippy::too_many_arguments)]
pub fn analysis_update(
    x: &mut EnsembleMatrix,
    ws: &mut AnalysisWorkspace,
    obs: &ObservationBatch,
    h: &ObservationOperator,
    r: &DiagObsCovariance,
    solver: SolverChoice,
    localization: Option<&InfluenceMatrix>,
    workers: usize,
) -> Result<AnalysisStats> {
    check_dim("observation operator vs dim(r)", r.len(), h.nobs())?;
    check_dim("state rows vs observation operator", h.nstate(), x.nstate())?;
    check_dim("observations vs observation operator", h.nobs(), obs.nobs())?;
    check_dim("perturbed copies vs ensemble size", x.nens(), obs.perturbed.cols())?;
    let nens = x.nens();
    if nens < 2 {
        return Err(Error::InvalidArgument(format!("ensemble statistics need at least two members, got {nens}")));
    }
    let mean = ensemble_mean(x);
    let scale = 1.0 / ((nens - 1) as f64).sqrt();
    ws.s.copy_from(&x.x);
    for j in 0..nens {
        ws.s.col_mut(j).iter_mut().zip(&mean).for_each(|(v, m)| *v = (*v - m) * scale);
    }
    // V is S itself when H is the identity
    let v = match h {
        ObservationOperator::Identity { .. } => &ws.s,
        ObservationOperator::Selection { indices, .. } => {
            ws.v.reset_zeros(indices.len(), nens);
            for j in 0..nens {
                let sj = ws.s.col(j);
                for (o, &i) in ws.v.col_mut(j).iter_mut().zip(indices) {
                    *o = sj[i];
                }
            }
            &ws.v
        }
    };
    innovations_into(obs, h, x, &mut ws.d);

    let (op_count, elapsed) = match solver {
        SolverChoice::Sherman if workers <= 1 => {
            let start = Instant::now();
            let ops = ismf_solve_into(r, v, &ws.d, &mut ws.z, &mut ws.u, &mut ws.h)?;
            (Some(ops), start.elapsed())
        }
        _ => {
            // only the SVD variant reads the unscaled deviations
            let v_unscaled = match solver {
                SolverChoice::Svd => h.apply_matrix(&centered(x)?)?,
                _ => DenseMatrix::zeros(0, 0),
            };
            let out = solve_analysis_system(solver, r, v, &v_unscaled, &ws.d, workers)?;
            ws.z = out.z;
            (out.op_count, out.elapsed)
        }
    };

    match localization {
        None => ws.s.matmul_into(&v.t_matmul(&ws.z)?, &mut ws.correction)?,
        Some(loc) => {
            let delta = loc.delta();
            check_dim("influence rows vs state length", x.nstate(), delta.rows())?;
            check_dim("influence columns vs observation count", h.nobs(), delta.cols())?;
            let mut gain = ws.s.matmul(&v.transpose())?;
            gain.as_mut_slice().iter_mut().zip(delta.as_slice()).for_each(|(g, w)| *g *= w);
            gain.matmul_into(&ws.z, &mut ws.correction)?;
        }
    }
    x.x.as_mut_slice().iter_mut().zip(ws.correction.as_slice()).for_each(|(a, c)| *a += c);
    x.x.ensure_finite("ensemble")?;
    x.stage = Stage::Analysis;
    Ok(AnalysisStats { op_count, elapsed })
}

/// Advances every member from `t0` to `t1` in whole model steps.
///
/// Members run in parallel on the current rayon pool.
pub fn forecast_step<M: ModelOperator + ?Sized>(
    model: &M,
    x: &EnsembleMatrix,
    t0: f64,
    t1: f64,
) -> Result<EnsembleMatrix> {
    let nsteps = steps_between(model.dt(), t0, t1)?;
    check_dim("ensemble rows vs model state length", model.state_len(), x.nstate())?;
    let columns: Vec<Vec<f64>> = (0..x.nens())
        .into_par_iter()
        .map(|j| model.integrate(x.member(j), nsteps).map_err(|e| e.in_member(j)))
        .collect::<Result<_>>()?;
    let out = if columns.is_empty() { DenseMatrix::zeros(x.nstate(), 0) } else { DenseMatrix::from_columns(&columns)? };
    EnsembleMatrix::new(out, Stage::Background, t1)
}

/// Number of `dt` steps spanning `[t0, t1]`; the window must be a whole multiple of `dt`.
pub fn steps_between(dt: f64, t0: f64, t1: f64) -> Result<usize> {
    let span = t1 - t0;
    if !(span >= 0.0) {
        return Err(Error::InvalidArgument(format!("forecast window [{t0}, {t1}] runs backwards")));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > 1e-9 * span.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!("forecast window {span} is not a multiple of the model step {dt}")));
    }
    Ok(n as usize)
}

/// Scales deviations about the ensemble mean by `alpha`.
pub fn inflate(x: &EnsembleMatrix, alpha: f64) -> Result<EnsembleMatrix> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("inflation factor must be >= 1, got {alpha}")));
    }
    let mean = ensemble_mean(x);
    let mut out = x.x.clone();
    for j in 0..out.cols() {
        out.col_mut(j).iter_mut().zip(&mean).for_each(|(v, m)| *v = m + alpha * (*v - m));
    }
    EnsembleMatrix::new(out, x.stage, x.time)
}

/// Adds `ξ ~ N(0, std²·I)` to every member.
pub fn add_model_error(x: &mut EnsembleMatrix, std: f64, rng: &mut RngStream) -> Result<()> {
    let noise = gaussian_matrix(rng, x.nstate(), x.nens(), 0.0, RowStd::Scalar(std))?;
    x.x = x.x.add(&noise)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(rows: &[&[f64]]) -> EnsembleMatrix {
        EnsembleMatrix::new(DenseMatrix::from_rows(rows).unwrap(), Stage::Background, 0.0).unwrap()
    }

    fn random_ens(nstate: usize, nens: usize, seed: u64) -> EnsembleMatrix {
        let mut rng = RngStream::new(seed);
        let x = gaussian_matrix(&mut rng, nstate, nens, 1.0, RowStd::Scalar(2.0)).unwrap();
        EnsembleMatrix::new(x, Stage::Background, 0.0).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(ensemble_mean(&ens(&[&[3.0, 3.0, 3.0], &[-1.0, -1.0, -1.0]])), vec![3.0, -1.0]);
        assert_eq!(ensemble_mean(&ens(&[&[0.0, 2.0]])), vec![1.0]);
        let x = random_ens(10, 5, 1);
        let m = ensemble_mean(&x);
        for i in 0..10 {
            let mut acc = 0.0;
            for j in 0..5 {
                acc += x.x[(i, j)];
            }
            assert!((m[i] - acc / 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn deviation_examples() {
        let s = member_deviations(&ens(&[&[4.0, 4.0, 4.0]])).unwrap().s;
        assert!(s.as_slice().iter().all(|v| *v == 0.0));
        let s = member_deviations(&ens(&[&[0.0, 2.0]])).unwrap().s;
        assert_eq!(s.as_slice(), &[-1.0, 1.0]);
        assert!(member_deviations(&ens(&[&[1.0]])).is_err());
    }

    #[test]
    fn deviations_reproduce_sample_covariance() {
        let x = random_ens(8, 4, 2);
        let s = member_deviations(&x).unwrap().s;
        let p = s.matmul(&s.transpose()).unwrap();
        let m = ensemble_mean(&x);
        for a in 0..8 {
            for b in 0..8 {
                let mut c = 0.0;
                for j in 0..4 {
                    c += (x.x[(a, j)] - m[a]) * (x.x[(b, j)] - m[b]);
                }
                assert!((p[(a, b)] - c / 3.0).abs() < 1e-12);
            }
            let row_sum: f64 = (0..4).map(|j| s[(a, j)]).sum();
            assert!(row_sum.abs() < 1e-10 * 4.0 * s.max_abs());
        }
    }

    #[test]
    fn perturbation_batch_is_consistent() {
        let r = DiagObsCovariance::new(vec![0.5, 2.0]).unwrap();
        let y = [1.0, -1.0];
        let a = perturb_observations(&y, &r, 6, &mut RngStream::new(4)).unwrap();
        let b = perturb_observations(&y, &r, 6, &mut RngStream::new(4)).unwrap();
        assert_eq!(a, b);
        for i in 0..2 {
            for j in 0..6 {
                assert_eq!(a.perturbed[(i, j)], y[i] + a.perturbations[(i, j)]);
            }
        }
    }

    #[test]
    fn tiny_variance_leaves_observations() {
        let r = DiagObsCovariance::uniform(3, 1e-300).unwrap();
        let y = [1.0, 2.0, 3.0];
        let batch = perturb_observations(&y, &r, 4, &mut RngStream::new(1)).unwrap();
        for j in 0..4 {
            assert_eq!(batch.perturbed.col(j), &y);
        }
    }

    #[test]
    fn perturbation_variance() {
        let r = DiagObsCovariance::uniform(3, 1.0).unwrap();
        let batch = perturb_observations(&[0.0; 3], &r, 10_000, &mut RngStream::new(8)).unwrap();
        for i in 0..3 {
            let row = batch.perturbations.row(i);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (row.len() - 1) as f64;
            assert!((var - 1.0).abs() < 0.1, "row {i}: {var}");
        }
    }

    #[test]
    fn innovation_examples() {
        let x = ens(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let h = ObservationOperator::selection(3, vec![0, 2]).unwrap();
        let perfect = ObservationBatch {
            y: vec![0.0, 0.0],
            perturbed: h.apply_matrix(&x.x).unwrap(),
            perturbations: DenseMatrix::zeros(2, 2),
        };
        assert!(innovations(&perfect, &h, &x).unwrap().as_slice().iter().all(|v| *v == 0.0));

        let single = ens(&[&[0.5], &[1.5]]);
        let r = DiagObsCovariance::uniform(2, 0.1).unwrap();
        let obs = perturb_observations(&[1.0, 1.0], &r, 1, &mut RngStream::new(3)).unwrap();
        let d = innovations(&obs, &ObservationOperator::identity(2), &single).unwrap();
        for i in 0..2 {
            assert_eq!(d[(i, 0)], 1.0 + obs.perturbations[(i, 0)] - single.x[(i, 0)]);
        }
    }

    #[test]
    fn selection_validation_and_adjoint() {
        assert!(ObservationOperator::selection(5, vec![1, 1]).is_err());
        assert!(ObservationOperator::selection(5, vec![2, 1]).is_err());
        assert!(ObservationOperator::selection(5, vec![0, 5]).is_err());
        let h = ObservationOperator::selection(5, vec![1, 3]).unwrap();
        let x = [10.0, 11.0, 12.0, 13.0, 14.0];
        let back = h.adjoint(&h.apply(&x).unwrap()).unwrap();
        assert_eq!(back, vec![0.0, 11.0, 0.0, 13.0, 0.0]);
    }

    #[test]
    fn no_information_limit() {
        let x = random_ens(6, 4, 5);
        let h = ObservationOperator::identity(6);
        let r = DiagObsCovariance::uniform(6, 1e12).unwrap();
        let obs =
            perturb_observations(&[0.0; 6], &DiagObsCovariance::uniform(6, 1.0).unwrap(), 4, &mut RngStream::new(2))
                .unwrap();
        for solver in SolverChoice::ALL {
            let xa = analysis_step(&x, &obs, &h, &r, solver, None).unwrap();
            assert!(xa.x.max_abs_diff(&x.x) <= 1e-6 * x.x.max_abs(), "{solver}");
        }
    }

    #[test]
    fn zero_spread_is_left_alone() {
        let x = ens(&[&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]]);
        let h = ObservationOperator::identity(2);
        let r = DiagObsCovariance::uniform(2, 0.5).unwrap();
        let obs = perturb_observations(&[5.0, 5.0], &r, 3, &mut RngStream::new(9)).unwrap();
        for solver in SolverChoice::ALL {
            let xa = analysis_step(&x, &obs, &h, &r, solver, None).unwrap();
            assert_eq!(xa.x, x.x);
            assert_eq!(xa.stage, Stage::Analysis);
        }
    }

    #[test]
    fn inflation_examples() {
        let x = ens(&[&[0.0, 2.0]]);
        assert_eq!(inflate(&x, 1.0).unwrap().x, x.x);
        let y = inflate(&x, 2.0).unwrap();
        assert_eq!(y.x.as_slice(), &[-1.0, 3.0]);
        assert_eq!(ensemble_mean(&y), vec![1.0]);
        assert!(inflate(&x, 0.9).is_err());
    }

    #[test]
    fn inflation_scales_covariance() {
        let x = random_ens(7, 5, 6);
        let alpha = 1.3;
        let y = inflate(&x, alpha).unwrap();
        let p = |e: &EnsembleMatrix| {
            let s = member_deviations(e).unwrap().s;
            s.matmul(&s.transpose()).unwrap()
        };
        let (px, py) = (p(&x), p(&y));
        assert!(py.max_abs_diff(&px.scaled(alpha * alpha)) <= 1e-10 * py.max_abs());
        let (mx, my) = (ensemble_mean(&x), ensemble_mean(&y));
        for (a, b) in mx.iter().zip(&my) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn cyclic_influence_examples() {
        let h = ObservationOperator::selection(10, vec![0, 5, 9]).unwrap();
        let loc = influence_matrix_cyclic(10, 3, &h).unwrap();
        assert_eq!(loc.delta()[(0, 0)], 1.0);
        assert!((loc.delta()[(0, 1)] - 0.60653).abs() < 1e-5);
        assert_eq!(cyclic_distance(0, 9, 10), 1);
        assert_eq!(loc.delta()[(0, 2)], (-0.1f64).exp());
        let cut = influence_matrix_cyclic_scaled(10, 3, &h, 10.0, Some(2)).unwrap();
        assert_eq!(cut.delta()[(0, 1)], 0.0);
    }

    #[test]
    fn unit_influence_matches_unlocalized() {
        let x = random_ens(12, 5, 7);
        let h = ObservationOperator::selection(12, vec![0, 2, 5, 7, 11]).unwrap();
        let r = DiagObsCovariance::uniform(5, 0.3).unwrap();
        let obs = perturb_observations(&[0.5; 5], &r, 5, &mut RngStream::new(1)).unwrap();
        let ones = InfluenceMatrix::new(DenseMatrix::from_fn(12, 5, |_, _| 1.0)).unwrap();
        let plain = analysis_step(&x, &obs, &h, &r, SolverChoice::Sherman, None).unwrap();
        let local = analysis_step(&x, &obs, &h, &r, SolverChoice::Sherman, Some(&ones)).unwrap();
        assert!(plain.x.max_abs_diff(&local.x) <= 1e-12 * plain.x.max_abs());
    }

    #[test]
    fn window_arithmetic() {
        assert_eq!(steps_between(0.05, 0.0, 0.0).unwrap(), 0);
        assert_eq!(steps_between(0.05, 1.0, 1.5).unwrap(), 10);
        assert!(steps_between(0.05, 1.0, 1.52).is_err());
        assert!(steps_between(0.05, 1.0, 0.5).is_err());
    }

    #[test]
    fn reused_workspace_matches_fresh_step() {
        let mut ws = AnalysisWorkspace::default();
        // shrinking and growing sizes exercise buffer reuse
        for (nstate, nens, seed) in [(30, 6, 1), (12, 4, 2), (45, 9, 3)] {
            let x = random_ens(nstate, nens, seed);
            let h = ObservationOperator::selection(nstate, (0..nstate).step_by(2).collect()).unwrap();
            let r = DiagObsCovariance::uniform(h.nobs(), 0.5).unwrap();
            let y = vec![1.0; h.nobs()];
            let batch = perturb_observations(&y, &r, nens, &mut RngStream::new(seed)).unwrap();
            for solver in SolverChoice::ALL {
                let fresh = analysis_step(&x, &batch, &h, &r, solver, None).unwrap();
                let mut inplace = x.clone();
                analysis_update(&mut inplace, &mut ws, &batch, &h, &r, solver, None, 1).unwrap();
                assert_eq!(inplace, fresh);
            }
        }
    }
}
