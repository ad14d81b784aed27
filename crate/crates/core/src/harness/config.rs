//! Experiment configuration: TOML with `[section]` headers, echoed verbatim
//! into every run manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Lorenz96Config, QgConfig};
use crate::solver::SolverChoice;

pub const ENV_SEED_TRUTH: &str = "SMENKF_SEED_TRUTH";
pub const ENV_SEED_ENSEMBLE: &str = "SMENKF_SEED_ENSEMBLE";
pub const ENV_SEED_OBS: &str = "SMENKF_SEED_OBS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lorenz96,
    Qg33,
    Qg65,
    Qg129,
    /// QG with every grid parameter taken from the `[qg]` section.
    Custom,
}

impl ModelKind {
    pub fn is_qg(self) -> bool {
        !matches!(self, ModelKind::Lorenz96)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lorenz96 => "lorenz96",
            ModelKind::Qg33 => "qg33",
            ModelKind::Qg65 => "qg65",
            ModelKind::Qg129 => "qg129",
            ModelKind::Custom => "custom",
        }
    }
}

/// How forecast-only steps enter the error history.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accumulation {
    /// One record per analysis cycle.
    #[default]
    PerCycle,
    /// One record per model step; steps without an analysis report the forecast error twice.
    PerStep,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    #[default]
    UniformStride,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelKind,
    pub nens: usize,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverChoice>,
    /// Model steps after the initial time.
    pub steps: usize,
    /// Model steps between analyses.
    #[serde(default = "one")]
    pub analysis_interval: usize,
    #[serde(default)]
    pub accumulation: Accumulation,
    #[serde(default = "one")]
    pub workers: usize,
    /// Also integrate the initial ensemble without assimilation.
    #[serde(default = "yes")]
    pub free_run: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzSection {
    pub nstate: usize,
    #[serde(default = "default_forcing")]
    pub forcing: f64,
    #[serde(default = "default_lorenz_dt")]
    pub dt: f64,
    /// Initial ensemble spread as a fraction of `|x_true|`.
    #[serde(default = "default_init_pct")]
    pub init_pct: f64,
    /// Truth steps integrated before the initial time.
    #[serde(default = "default_spinup")]
    pub spinup_steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QgSection {
    #[serde(default = "default_std_ens")]
    pub std_ens: f64,
    #[serde(default = "default_spinup")]
    pub spinup_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ly: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rkb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rkh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rkh2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub froude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationsSection {
    /// Observed fraction of the state; exclusive with `nobs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pobs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nobs: Option<usize>,
    #[serde(default)]
    pub strategy: StrategyKind,
    /// Seed of the random selection; defaults to the observation seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_seed: Option<u64>,
    #[serde(default = "default_obs_variance")]
    pub variance: f64,
}

impl Default for ObservationsSection {
    fn default() -> Self {
        Self {
            pobs: None,
            nobs: None,
            strategy: StrategyKind::default(),
            selection_seed: None,
            variance: default_obs_variance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    /// Multiplicative inflation applied to each background before the analysis.
    #[serde(default = "default_inflation")]
    pub inflation: f64,
    #[serde(default)]
    pub localization: bool,
    /// Length scale of `exp(−d/scale)`; defaults to `Nstate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization_scale: Option<f64>,
    /// Distance beyond which the weight is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization_radius: Option<usize>,
    /// Standard deviation of additive noise on forecast members.
    #[serde(default)]
    pub model_error_std: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            inflation: default_inflation(),
            localization: false,
            localization_scale: None,
            localization_radius: None,
            model_error_std: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default = "default_seed_truth")]
    pub truth: u64,
    #[serde(default = "default_seed_ensemble")]
    pub ensemble: u64,
    #[serde(default = "default_seed_obs")]
    pub obs: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { truth: default_seed_truth(), ensemble: default_seed_ensemble(), obs: default_seed_obs() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "yes")]
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out_dir(), plots: true }
    }
}

/// Base point and timing budget of a scaling sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    #[serde(default = "default_scaling_nens")]
    pub nens: usize,
    #[serde(default = "default_scaling_nobs")]
    pub nobs: usize,
    /// Repetitions continue until their summed time reaches this budget.
    #[serde(default = "default_min_seconds")]
    pub min_seconds: f64,
    #[serde(default = "default_max_reps")]
    pub max_reps: usize,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            nens: default_scaling_nens(),
            nobs: default_scaling_nobs(),
            min_seconds: default_min_seconds(),
            max_reps: default_max_reps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lorenz96: Option<LorenzSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qg: Option<QgSection>,
    #[serde(default)]
    pub observations: ObservationsSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub scaling: ScalingSection,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_solvers() -> Vec<SolverChoice> {
    SolverChoice::ALL.to_vec()
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_forcing() -> f64 {
    8.0
}
fn default_lorenz_dt() -> f64 {
    0.05
}
fn default_init_pct() -> f64 {
    0.05
}
fn default_spinup() -> usize {
    1000
}
fn default_std_ens() -> f64 {
    5.0
}
fn default_obs_variance() -> f64 {
    1e-4
}
fn default_inflation() -> f64 {
    1.0
}
fn default_seed_truth() -> u64 {
    1
}
fn default_seed_ensemble() -> u64 {
    2
}
fn default_seed_obs() -> u64 {
    3
}
fn default_out_dir() -> String {
    "out".into()
}
fn default_scaling_nens() -> usize {
    16
}
fn default_scaling_nobs() -> usize {
    1000
}
fn default_min_seconds() -> f64 {
    0.25
}
fn default_max_reps() -> usize {
    50
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config, or the `config` object of a JSON run manifest.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let config = value
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Config(format!("{}: no `config` object", path.display())))?;
            let cfg: Self = serde_json::from_value(config).map_err(|e| Error::Config(e.to_string()))?;
            cfg.validate()?;
            Ok(cfg)
        } else {
            Self::from_toml_str(&text)
        }
    }

    /// Replaces seeds with values from `SMENKF_SEED_{TRUTH,ENSEMBLE,OBS}` when set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        self.apply_overrides(|k| std::env::var(k).ok())
    }

    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for (key, slot) in [
            (ENV_SEED_TRUTH, &mut self.seeds.truth),
            (ENV_SEED_ENSEMBLE, &mut self.seeds.ensemble),
            (ENV_SEED_OBS, &mut self.seeds.obs),
        ] {
            if let Some(v) = lookup(key) {
                *slot =
                    v.trim().parse().map_err(|_| Error::Config(format!("{key}={v:?} is not an unsigned integer")))?;
            }
        }
        Ok(())
    }

    pub fn lorenz_config(&self) -> Result<Lorenz96Config> {
        let s =
            self.lorenz96.as_ref().ok_or_else(|| Error::Config("model lorenz96 needs a [lorenz96] section".into()))?;
        Ok(Lorenz96Config { nstate: s.nstate, forcing: s.forcing, dt: s.dt })
    }

    pub fn qg_section(&self) -> QgSection {
        self.qg.clone().unwrap_or(QgSection {
            std_ens: default_std_ens(),
            spinup_steps: default_spinup(),
            ..Default::default()
        })
    }

    pub fn qg_config(&self) -> Result<QgConfig> {
        let s = self.qg_section();
        let mut c = match self.experiment.model {
            ModelKind::Qg33 => QgConfig::qg33(),
            ModelKind::Qg65 => QgConfig::qg65(),
            ModelKind::Qg129 => QgConfig::qg129(),
            ModelKind::Custom => {
                let missing =
                    [("n", s.n.is_none()), ("m", s.m.is_none()), ("lx", s.lx.is_none()), ("ly", s.ly.is_none())];
                if let Some((k, _)) = missing.iter().find(|(_, m)| *m) {
                    return Err(Error::Config(format!("model custom needs [qg] {k}")));
                }
                QgConfig::qg33()
            }
            ModelKind::Lorenz96 => return Err(Error::Config("not a QG model".into())),
        };
        c.n = s.n.unwrap_or(c.n);
        c.m = s.m.unwrap_or(c.m);
        c.lx = s.lx.unwrap_or(c.lx);
        c.ly = s.ly.unwrap_or(c.ly);
        c.rkb = s.rkb.unwrap_or(c.rkb);
        c.rkh = s.rkh.unwrap_or(c.rkh);
        c.rkh2 = s.rkh2.unwrap_or(c.rkh2);
        c.beta = s.beta.unwrap_or(c.beta);
        c.r = s.r.unwrap_or(c.r);
        c.froude = s.froude.unwrap_or(c.froude);
        c.dt = s.dt.unwrap_or(c.dt);
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn nstate(&self) -> Result<usize> {
        if self.experiment.model.is_qg() {
            Ok(self.qg_config()?.nstate())
        } else {
            Ok(self.lorenz_config()?.nstate)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let e = &self.experiment;
        if e.nens < 2 {
            return bad(format!("nens must be at least 2, got {}", e.nens));
        }
        if e.solvers.is_empty() {
            return bad("at least one solver is required".into());
        }
        let mut seen = e.solvers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != e.solvers.len() {
            return bad("solver list contains duplicates".into());
        }
        if e.analysis_interval == 0 {
            return bad("analysis_interval must be at least 1".into());
        }
        if !e.steps.is_multiple_of(e.analysis_interval) {
            return bad(format!(
                "steps ({}) must be a multiple of analysis_interval ({})",
                e.steps, e.analysis_interval
            ));
        }
        if e.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        match e.model {
            ModelKind::Lorenz96 => {
                if self.qg.is_some() {
                    return bad("[qg] section given for a Lorenz-96 experiment".into());
                }
                let l = self.lorenz_config()?;
                l.validate().map_err(|err| Error::Config(err.to_string()))?;
                if !(l.dt > 0.0) {
                    return bad("lorenz96 dt must be positive".into());
                }
                let s = self.lorenz96.as_ref().expect("checked above");
                if !(s.init_pct > 0.0) || !s.init_pct.is_finite() {
                    return bad("lorenz96 init_pct must be positive".into());
                }
            }
            _ => {
                if self.lorenz96.is_some() {
                    return bad("[lorenz96] section given for a QG experiment".into());
                }
                let c = self.qg_config()?;
                if !(c.dt > 0.0) {
                    return bad("qg dt must be positive".into());
                }
                let s = self.qg_section();
                if !(s.std_ens > 0.0) || !s.std_ens.is_finite() {
                    return bad("qg std_ens must be positive".into());
                }
            }
        }
        let nstate = self.nstate()?;
        let o = &self.observations;
        match (o.pobs, o.nobs) {
            (Some(_), Some(_)) => return bad("give either pobs or nobs, not both".into()),
            (Some(p), None) if !(p > 0.0 && p <= 1.0) => return bad(format!("pobs must lie in (0, 1], got {p}")),
            (None, Some(n)) if n == 0 || n > nstate => return bad(format!("nobs must lie in [1, {nstate}], got {n}")),
            _ => {}
        }
        if !(o.variance > 0.0) || !o.variance.is_finite() {
            return bad(format!("observation variance must be positive, got {}", o.variance));
        }
        let f = &self.filter;
        if !(f.inflation >= 1.0) || !f.inflation.is_finite() {
            return bad(format!("inflation must be >= 1, got {}", f.inflation));
        }
        if let Some(s) = f.localization_scale {
            if !(s > 0.0) || !s.is_finite() {
                return bad(format!("localization_scale must be positive, got {s}"));
            }
        }
        if !(f.model_error_std >= 0.0) || !f.model_error_std.is_finite() {
            return bad("model_error_std must be non-negative".into());
        }
        let s = &self.scaling;
        if s.nens == 0 || s.nobs == 0 || s.max_reps == 0 || !(s.min_seconds >= 0.0) {
            return bad("scaling nens, nobs, max_reps must be positive and min_seconds non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[experiment]
model = "lorenz96"
nens = 10
steps = 40
analysis_interval = 20

[lorenz96]
nstate = 40
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.experiment.solvers, SolverChoice::ALL.to_vec());
        assert_eq!(cfg.lorenz_config().unwrap(), Lorenz96Config::new(40));
        assert_eq!(cfg.observations.variance, 1e-4);
        assert_eq!(cfg.seeds, Seeds::default());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            MINIMAL.replace("nens = 10", "nens = 1"),
            MINIMAL.replace("steps = 40", "steps = 30"),
            MINIMAL.replace("nstate = 40", "nstate = 40\nbogus = 1"),
            MINIMAL.replace("[lorenz96]\nnstate = 40", ""),
            format!("{MINIMAL}\n[observations]\npobs = 1.5\n"),
            format!("{MINIMAL}\n[filter]\ninflation = 0.5\n"),
            MINIMAL.replace("model = \"lorenz96\"", "model = \"lorenz63\""),
        ];
        for text in cases {
            let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
            assert!(err.is_config(), "{err}");
        }
    }

    #[test]
    fn seed_overrides() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.apply_overrides(|k| (k == ENV_SEED_OBS).then(|| "42".to_string())).unwrap();
        assert_eq!(cfg.seeds.obs, 42);
        assert_eq!(cfg.seeds.truth, 1);
        assert!(cfg.apply_overrides(|_| Some("x".into())).is_err());
    }

    #[test]
    fn qg_overrides() {
        let text = r#"
[experiment]
model = "qg33"
nens = 5
steps = 10
[qg]
std_ens = 2.5
froude = 100.0
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let c = cfg.qg_config().unwrap();
        assert_eq!((c.n, c.froude), (33, 100.0));
        assert_eq!(cfg.nstate().unwrap(), 961);
        let custom = text.replace("qg33", "custom");
        assert!(ExperimentConfig::from_toml_str(&custom).is_err());
    }
}
