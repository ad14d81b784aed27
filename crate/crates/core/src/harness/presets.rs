//! Desk-scale experiment presets.

use crate::error::{Error, Result};
use crate::harness::config::{
    Accumulation, ExperimentConfig, ExperimentSection, FilterSection, LorenzSection, ModelKind, ObservationsSection,
    OutputSection, QgSection, ScalingSection, Seeds,
};
use crate::solver::SolverChoice;

pub const PRESET_NAMES: [&str; 3] = ["lorenz-small", "lorenz-paper-500", "qg33-short"];

fn lorenz(
    name: &str,
    nstate: usize,
    nens: usize,
    interval: usize,
    observations: ObservationsSection,
    filter: FilterSection,
) -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentSection {
            name: name.into(),
            model: ModelKind::Lorenz96,
            nens,
            solvers: SolverChoice::ALL.to_vec(),
            // 100 time units at dt = 0.05
            steps: 2000,
            analysis_interval: interval,
            accumulation: Accumulation::PerCycle,
            workers: 1,
            free_run: true,
        },
        lorenz96: Some(LorenzSection { nstate, forcing: 8.0, dt: 0.05, init_pct: 0.05, spinup_steps: 1000 }),
        qg: None,
        observations,
        filter,
        seeds: Seeds::default(),
        output: OutputSection { dir: format!("out/{name}"), plots: true },
        scaling: ScalingSection::default(),
    }
}

/// Lorenz-96 with 40 variables and 20 members over 100 time units.
///
/// Every step is analysed with unit observation variance, 2% inflation and
/// a cyclic taper of scale 4 cut at distance 10. This keeps ensembles smaller
/// than the state stable; the partial taper is only well behaved while the
/// background spread stays comparable to the observation noise.
pub fn lorenz_small() -> ExperimentConfig {
    lorenz(
        "lorenz-small",
        40,
        20,
        1,
        ObservationsSection { pobs: Some(1.0), variance: 1.0, ..Default::default() },
        FilterSection {
            inflation: 1.02,
            localization: true,
            localization_scale: Some(4.0),
            localization_radius: Some(10),
            model_error_std: 0.0,
        },
    )
}

/// Lorenz-96 with 500 variables, all observed with variance 0.01² once per
/// time unit, and 200 members. No inflation or localization.
pub fn lorenz_paper_500() -> ExperimentConfig {
    lorenz(
        "lorenz-paper-500",
        500,
        200,
        20,
        ObservationsSection { pobs: Some(1.0), variance: 1e-4, ..Default::default() },
        FilterSection::default(),
    )
}

/// QG33 over 120 steps with an analysis every 10 steps, half the state observed.
pub fn qg33_short() -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentSection {
            name: "qg33-short".into(),
            model: ModelKind::Qg33,
            nens: 20,
            solvers: SolverChoice::ALL.to_vec(),
            steps: 120,
            analysis_interval: 10,
            accumulation: Accumulation::PerCycle,
            workers: 1,
            free_run: true,
        },
        lorenz96: None,
        qg: Some(QgSection { std_ens: 5.0, spinup_steps: 1000, ..Default::default() }),
        // Observation std 10, about 2.4% of the typical |q| after spin-up. With
        // variance 0.01² the analysis system is too ill-conditioned for the
        // three solvers to agree beyond a few digits.
        observations: ObservationsSection { pobs: Some(0.5), variance: 100.0, ..Default::default() },
        filter: FilterSection::default(),
        seeds: Seeds::default(),
        output: OutputSection { dir: "out/qg33-short".into(), plots: true },
        scaling: ScalingSection::default(),
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "lorenz-small" => Ok(lorenz_small()),
        "lorenz-paper-500" => Ok(lorenz_paper_500()),
        "qg33-short" => Ok(qg33_short()),
        other => Err(Error::Config(format!("unknown preset '{other}' (available: {})", PRESET_NAMES.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg, "{name}");
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn qg33_short_shape() {
        let cfg = qg33_short();
        assert_eq!(cfg.nstate().unwrap(), 961);
        assert_eq!(cfg.experiment.steps / cfg.experiment.analysis_interval, 12);
    }
}
