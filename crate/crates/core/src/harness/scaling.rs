//! Analysis-step timing sweeps over `Nobs` or `Nens`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::enkf::{
    analysis_update, perturb_observations, AnalysisWorkspace, EnsembleMatrix, ObservationOperator, Stage,
};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, DiagObsCovariance, RngStream, RowStd};
use crate::solver::SolverChoice;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Nobs,
    Nens,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Nobs => "nobs",
            SweepAxis::Nens => "nens",
        }
    }

    pub fn value_of(self, row: &ScalingRow) -> usize {
        match self {
            SweepAxis::Nobs => row.nobs,
            SweepAxis::Nens => row.nens,
        }
    }
}

/// Parsed `nobs=a,b,c` or `nens=a,b,c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, list) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sweep '{s}' must look like nobs=a,b,c or nens=a,b,c")))?;
        let axis = match key.trim() {
            "nobs" => SweepAxis::Nobs,
            "nens" => SweepAxis::Nens,
            other => return Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        };
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("sweep value '{v}' is not a positive integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        let sweep = Sweep { axis, values };
        sweep.validate()?;
        Ok(sweep)
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        write!(f, "{}={}", self.axis.name(), v.join(","))
    }
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 3 {
            return Err(Error::Config(format!(
                "a scaling sweep needs at least 3 grid points, got {}",
                self.values.len()
            )));
        }
        if self.values.contains(&0) {
            return Err(Error::Config("sweep values must be positive".into()));
        }
        let mut sorted = self.values.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.values.len() {
            return Err(Error::Config("sweep values must be distinct".into()));
        }
        if self.axis == SweepAxis::Nens && sorted[0] < 2 {
            return Err(Error::Config("ensemble sizes in a sweep must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ScalingOptions {
    pub solvers: Vec<SolverChoice>,
    /// Value of the axis not being swept.
    pub nobs: usize,
    pub nens: usize,
    pub min_seconds: f64,
    pub max_reps: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub solver: SolverChoice,
    pub nobs: usize,
    pub nens: usize,
    /// Fastest of `reps` timed analysis steps.
    pub analysis_s: f64,
    pub reps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub solver: SolverChoice,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub axis: SweepAxis,
    pub rows: Vec<ScalingRow>,
    pub slopes: Vec<SlopeFit>,
}

impl ScalingTable {
    pub fn slope(&self, solver: SolverChoice) -> Option<f64> {
        self.slopes.iter().find(|s| s.solver == solver).map(|s| s.slope)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("slope fit needs two or more paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope fit needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}

/// Times one analysis step on a synthetic, fully observed instance with `Nstate = Nobs`.
pub fn time_analysis(solver: SolverChoice, nobs: usize, nens: usize, opts: &ScalingOptions) -> Result<ScalingRow> {
    let mut rng = RngStream::new(opts.seed);
    let x = gaussian_matrix(&mut rng, nobs, nens, 0.0, RowStd::Scalar(1.0))?;
    let ens = EnsembleMatrix::new(x, Stage::Background, 0.0)?;
    let r = DiagObsCovariance::uniform(nobs, 1e-2)?;
    let y = gaussian_matrix(&mut rng, nobs, 1, 0.0, RowStd::Scalar(1.0))?.into_vec();
    let batch = perturb_observations(&y, &r, nens, &mut rng)?;
    let h = ObservationOperator::identity(nobs);

    // buffers persist across repetitions as they do across filter cycles
    let mut ws = AnalysisWorkspace::default();
    let mut member = ens.clone();
    let mut best = f64::INFINITY;
    let mut spent = 0.0;
    let mut reps = 0;
    while reps < opts.max_reps.max(1) && (reps == 0 || spent < opts.min_seconds) {
        member.x.copy_from(&ens.x);
        let t = Instant::now();
        analysis_update(&mut member, &mut ws, &batch, &h, &r, solver, None, opts.workers)?;
        let s = t.elapsed().as_secs_f64();
        std::hint::black_box(&member);
        best = best.min(s);
        spent += s;
        reps += 1;
    }
    Ok(ScalingRow { solver, nobs, nens, analysis_s: best, reps })
}

pub fn run_scaling_study(sweep: &Sweep, opts: &ScalingOptions) -> Result<ScalingTable> {
    sweep.validate()?;
    if opts.solvers.is_empty() {
        return Err(Error::Config("scaling study needs at least one solver".into()));
    }
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &solver in &opts.solvers {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &v in &sweep.values {
            let (nobs, nens) = match sweep.axis {
                SweepAxis::Nobs => (v, opts.nens),
                SweepAxis::Nens => (opts.nobs, v),
            };
            let row = time_analysis(solver, nobs, nens, opts)?;
            xs.push(v as f64);
            ys.push(row.analysis_s.max(1e-9));
            rows.push(row);
        }
        slopes.push(SlopeFit { solver, slope: fit_loglog_slope(&xs, &ys)? });
    }
    Ok(ScalingTable { axis: sweep.axis, rows, slopes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        let s: Sweep = "nobs=100,200,400".parse().unwrap();
        assert_eq!(s.axis, SweepAxis::Nobs);
        assert_eq!(s.values, vec![100, 200, 400]);
        assert_eq!(s.to_string(), "nobs=100,200,400");
        assert!("nobs=100".parse::<Sweep>().is_err());
        assert!("nobs=100,200".parse::<Sweep>().is_err());
        assert!("nobs=1,1,2".parse::<Sweep>().is_err());
        assert!("nstate=1,2,3".parse::<Sweep>().is_err());
        assert!("nens=1,2,3".parse::<Sweep>().is_err());
        assert!("nens=4,x,8".parse::<Sweep>().is_err());
    }

    #[test]
    fn slope_of_power_laws() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((fit_loglog_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert!(fit_loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(fit_loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn tiny_study_runs() {
        let opts = ScalingOptions {
            solvers: vec![SolverChoice::Sherman, SolverChoice::Svd],
            nobs: 20,
            nens: 4,
            min_seconds: 0.0,
            max_reps: 1,
            seed: 1,
            workers: 1,
        };
        let t = run_scaling_study(&"nens=2,4,8".parse().unwrap(), &opts).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.slopes.len(), 2);
        assert!(t.rows.iter().all(|r| r.nobs == 20 && r.reps == 1));
    }
}
