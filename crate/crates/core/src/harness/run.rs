//! Twin experiment: truth, synthetic observations and one filter run per solver.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::enkf::{
    add_model_error, analysis_update, forecast_step, inflate, influence_matrix_cyclic_scaled, perturb_observations,
    AnalysisWorkspace, EnsembleMatrix, InfluenceMatrix, ObservationBatch, ObservationOperator,
};
use crate::error::{Error, Result};
use crate::harness::config::{Accumulation, ExperimentConfig, StrategyKind};
use crate::linalg::{DiagObsCovariance, RngStream};
use crate::metrics::{elapsed_report, rse, MetricRecord, MetricSeries};
use crate::models::{Lorenz96, ModelOperator, QgModel};
use crate::observations::{
    build_initial_ensemble_lorenz, build_initial_ensemble_qg, observation_count, selection_with_count,
    synthesize_observation, SelectionStrategy, TruthTrajectory,
};
use crate::solver::SolverChoice;

/// Either model behind one forecast interface.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Lorenz(Lorenz96),
    Qg(QgModel),
}

impl Model {
    /// Field on which errors are measured: the state itself for Lorenz-96,
    /// the stream function for QG.
    pub fn diagnostic(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Lorenz(_) => Ok(x.to_vec()),
            Model::Qg(m) => m.stream_function(x),
        }
    }
}

impl ModelOperator for Model {
    fn dt(&self) -> f64 {
        match self {
            Model::Lorenz(m) => m.dt(),
            Model::Qg(m) => m.dt(),
        }
    }

    fn state_len(&self) -> usize {
        match self {
            Model::Lorenz(m) => m.state_len(),
            Model::Qg(m) => m.state_len(),
        }
    }

    fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Lorenz(m) => m.step(x),
            Model::Qg(m) => m.step(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub cycle: usize,
    pub time: f64,
    pub solver: String,
    pub rse_forecast: f64,
    pub rse_analysis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: SolverChoice,
    /// Mean analysis RSE over all records after the initial one.
    pub rmse: f64,
    pub forecast_rmse: f64,
    pub forecast_s: f64,
    pub analysis_s: f64,
    pub total_s: f64,
    /// Summed long-operation count over all analyses (Sherman-Morrison only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_count: Option<u64>,
}

/// SHA-256 digests of the inputs one solver run consumed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverHashes {
    pub truth: String,
    pub initial_ensemble: String,
    pub perturbations: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationHashes {
    pub truth: String,
    pub initial_ensemble: String,
    pub perturbations: String,
    pub per_solver: BTreeMap<String, SolverHashes>,
    /// Every solver consumed the same truth, initial ensemble and perturbations.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config: ExperimentConfig,
    pub nstate: usize,
    pub nobs: usize,
    pub time_unit: String,
    pub hashes: ReplicationHashes,
    pub metrics: Vec<MetricRow>,
    pub summary: Vec<SolverSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub free_run: Vec<MetricRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_run_rmse: Option<f64>,
}

impl RunManifest {
    pub fn summary_for(&self, solver: SolverChoice) -> Option<&SolverSummary> {
        self.summary.iter().find(|s| s.solver == solver)
    }

    pub fn rows_for(&self, solver: SolverChoice) -> impl Iterator<Item = &MetricRow> {
        self.metrics.iter().filter(move |r| r.solver == solver.name())
    }
}

fn hash_slices<'a>(parts: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut h = Sha256::new();
    for part in parts {
        for v in part {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Everything shared by the solver runs of one experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: Model,
    pub truth: TruthTrajectory,
    truth_diag: Vec<Vec<f64>>,
    pub initial: EnsembleMatrix,
    pub h: ObservationOperator,
    pub r: DiagObsCovariance,
    pub localization: Option<InfluenceMatrix>,
    /// One batch per analysis cycle, cycle `c` at index `c − 1`.
    pub batches: Vec<ObservationBatch>,
}

/// Filter output of one solver.
#[derive(Clone, Debug)]
pub struct SolverRun {
    /// `None` for the free run.
    pub solver: Option<SolverChoice>,
    pub series: MetricSeries,
    pub hashes: SolverHashes,
    pub op_count: Option<u64>,
}

impl Experiment {
    /// Builds truth, initial ensemble, observation operator and all observation batches.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let seeds = config.seeds;
        let mut truth_rng = RngStream::new(seeds.truth);
        let (model, x0, spinup, tag) = if config.experiment.model.is_qg() {
            let qg = config.qg_config()?;
            let n = qg.nstate();
            let x0: Vec<f64> = (0..n).map(|_| truth_rng.standard_normal()).collect();
            (Model::Qg(QgModel::new(qg)?), x0, config.qg_section().spinup_steps, config.experiment.model.name())
        } else {
            let l = config.lorenz_config()?;
            let x0: Vec<f64> = (0..l.nstate).map(|_| l.forcing + truth_rng.standard_normal()).collect();
            let spin = config.lorenz96.as_ref().map_or(0, |s| s.spinup_steps);
            (Model::Lorenz(Lorenz96::new(l)?), x0, spin, "lorenz96")
        };
        let nstate = model.state_len();
        let dt = model.dt();
        let start = model.integrate(&x0, spinup)?;
        let steps = config.experiment.steps;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        let truth = TruthTrajectory::generate(&model, tag, seeds.truth, start, &times)?;
        let truth_diag = truth.states.iter().map(|x| model.diagnostic(x)).collect::<Result<Vec<_>>>()?;

        let nens = config.experiment.nens;
        let mut ens_rng = RngStream::substream(seeds.ensemble, 0);
        let initial = match &model {
            Model::Lorenz(_) => {
                let pct = config.lorenz96.as_ref().map_or(0.05, |s| s.init_pct);
                build_initial_ensemble_lorenz(&truth.states[0], pct, nens, &mut ens_rng)?
            }
            Model::Qg(_) => {
                build_initial_ensemble_qg(&truth.states[0], config.qg_section().std_ens, nens, &mut ens_rng)?
            }
        };

        let obs = &config.observations;
        let nobs = match (obs.nobs, obs.pobs) {
            (Some(n), _) => n,
            (None, Some(p)) => observation_count(nstate, p)?,
            (None, None) => nstate,
        };
        let strategy = match obs.strategy {
            StrategyKind::UniformStride => SelectionStrategy::UniformStride,
            StrategyKind::Random => SelectionStrategy::Random { seed: obs.selection_seed.unwrap_or(seeds.obs) },
        };
        let h = selection_with_count(nstate, nobs, strategy)?;
        let r = DiagObsCovariance::uniform(nobs, obs.variance)?;
        let f = &config.filter;
        let localization = if f.localization {
            let scale = f.localization_scale.unwrap_or(nstate as f64);
            Some(influence_matrix_cyclic_scaled(nstate, nobs, &h, scale, f.localization_radius)?)
        } else {
            None
        };

        let interval = config.experiment.analysis_interval;
        let batches = (1..=steps / interval)
            .map(|c| {
                let x_true = &truth.states[c * interval];
                let mut y_rng = RngStream::substream(seeds.obs, 2 * c as u64);
                let y = synthesize_observation(x_true, &h, &r, &mut y_rng)?;
                let mut p_rng = RngStream::substream(seeds.obs, 2 * c as u64 + 1);
                perturb_observations(&y, &r, nens, &mut p_rng)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self { config: config.clone(), model, truth, truth_diag, initial, h, r, localization, batches })
    }

    pub fn nobs(&self) -> usize {
        self.h.nobs()
    }

    fn mean_error(&self, x: &EnsembleMatrix, step: usize) -> Result<f64> {
        rse(&self.truth_diag[step], &self.model.diagnostic(&x.mean())?)
    }

    fn hashes_of(&self, initial: &EnsembleMatrix, batches: &[ObservationBatch]) -> SolverHashes {
        SolverHashes {
            truth: hash_slices(self.truth.states.iter().map(|s| s.as_slice())),
            initial_ensemble: hash_slices([initial.x.as_slice()]),
            perturbations: hash_slices(batches.iter().flat_map(|b| [b.y.as_slice(), b.perturbations.as_slice()])),
        }
    }

    pub fn reference_hashes(&self) -> SolverHashes {
        self.hashes_of(&self.initial, &self.batches)
    }

    /// Runs the filter with `solver`, or without analyses when `solver` is `None`.
    pub fn run(&self, solver: Option<SolverChoice>, workers: usize) -> Result<SolverRun> {
        let label = solver.map_or("free", SolverChoice::name);
        let wrap =
            |cycle: usize| move |e: Error| Error::Cycle { cycle, solver: label.to_string(), source: Box::new(e) };
        let exp = &self.config.experiment;
        let interval = exp.analysis_interval;
        let dt = self.model.dt();
        let per_step = exp.accumulation == Accumulation::PerStep;
        let initial = self.initial.clone();
        let hashes = self.hashes_of(&initial, &self.batches);

        let mut series = MetricSeries::default();
        let e0 = self.mean_error(&initial, 0).map_err(wrap(0))?;
        series.push(MetricRecord { cycle: 0, time: 0.0, rse_forecast: e0, rse_analysis: e0 });
        let mut ops: Option<u64> = None;
        let mut x = initial;
        let mut workspace = AnalysisWorkspace::default();
        for (idx, batch) in self.batches.iter().enumerate() {
            let c = idx + 1;
            let first = (c - 1) * interval;
            let end = c * interval;
            let t_end = end as f64 * dt;
            let cycle_err = wrap(c);

            let t = Instant::now();
            if per_step {
                for s in first + 1..=end {
                    let t0 = Instant::now();
                    x = forecast_step(&self.model, &x, (s - 1) as f64 * dt, s as f64 * dt).map_err(wrap(c))?;
                    series.add_forecast(t0.elapsed());
                    if s < end {
                        let e = self.mean_error(&x, s).map_err(wrap(c))?;
                        series.push(MetricRecord { cycle: s, time: s as f64 * dt, rse_forecast: e, rse_analysis: e });
                    }
                }
            } else {
                x = forecast_step(&self.model, &x, first as f64 * dt, t_end).map_err(wrap(c))?;
            }
            let t_model_error = Instant::now();
            if self.config.filter.model_error_std > 0.0 {
                let mut rng = RngStream::substream(self.config.seeds.ensemble, c as u64);
                add_model_error(&mut x, self.config.filter.model_error_std, &mut rng).map_err(wrap(c))?;
            }
            if per_step {
                series.add_forecast(t_model_error.elapsed());
            } else {
                series.add_forecast(t.elapsed());
            }
            let rse_forecast = self.mean_error(&x, end).map_err(&cycle_err)?;

            let rse_analysis = match solver {
                Some(choice) => {
                    let t = Instant::now();
                    if self.config.filter.inflation > 1.0 {
                        x = inflate(&x, self.config.filter.inflation).map_err(&cycle_err)?;
                    }
                    let stats = analysis_update(
                        &mut x,
                        &mut workspace,
                        batch,
                        &self.h,
                        &self.r,
                        choice,
                        self.localization.as_ref(),
                        workers,
                    )
                    .map_err(&cycle_err)?;
                    series.add_analysis(t.elapsed());
                    if let Some(n) = stats.op_count {
                        *ops.get_or_insert(0) += n.multiplications_and_divisions;
                    }
                    self.mean_error(&x, end).map_err(&cycle_err)?
                }
                None => rse_forecast,
            };
            series.push(MetricRecord {
                cycle: if per_step { end } else { c },
                time: t_end,
                rse_forecast,
                rse_analysis,
            });
        }
        Ok(SolverRun { solver, series, hashes, op_count: ops })
    }
}

fn rows(label: &str, series: &MetricSeries) -> Vec<MetricRow> {
    series
        .records
        .iter()
        .map(|r| MetricRow {
            cycle: r.cycle,
            time: r.time,
            solver: label.to_string(),
            rse_forecast: r.rse_forecast,
            rse_analysis: r.rse_analysis,
        })
        .collect()
}

/// Runs every configured solver on identical inputs and collects the results.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let workers = config.experiment.workers;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run_prepared(&Experiment::prepare(config)?, workers))
}

fn run_prepared(exp: &Experiment, workers: usize) -> Result<RunManifest> {
    let reference = exp.reference_hashes();
    let mut metrics = Vec::new();
    let mut summary = Vec::new();
    let mut per_solver = BTreeMap::new();
    for &solver in &exp.config.experiment.solvers {
        let run = exp.run(Some(solver), workers)?;
        let el = elapsed_report(&run.series);
        summary.push(SolverSummary {
            solver,
            rmse: run.series.analysis_rmse()?,
            forecast_rmse: run.series.forecast_rmse()?,
            forecast_s: el.forecast_s,
            analysis_s: el.analysis_s,
            total_s: el.total_s,
            op_count: run.op_count,
        });
        metrics.extend(rows(solver.name(), &run.series));
        per_solver.insert(solver.name().to_string(), run.hashes);
    }
    let (free_run, free_run_rmse) = if exp.config.experiment.free_run {
        let run = exp.run(None, workers)?;
        (rows("free", &run.series), Some(run.series.analysis_rmse()?))
    } else {
        (Vec::new(), None)
    };
    let consistent = per_solver.values().all(|h| *h == reference);
    let time_unit = match exp.model {
        Model::Lorenz(_) => "Lorenz-96 time units (1 unit = 5 days)",
        Model::Qg(_) => "QG model steps (1 step = 1.27 days)",
    };
    Ok(RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config: exp.config.clone(),
        nstate: exp.model.state_len(),
        nobs: exp.nobs(),
        time_unit: time_unit.into(),
        hashes: ReplicationHashes {
            truth: reference.truth,
            initial_ensemble: reference.initial_ensemble,
            perturbations: reference.perturbations,
            per_solver,
            consistent,
        },
        metrics,
        summary,
        free_run,
        free_run_rmse,
    })
}
