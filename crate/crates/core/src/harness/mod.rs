//! Experiment runner: configuration, presets, twin experiments, scaling
//! sweeps and result files.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;
pub mod scaling;

pub use config::{Accumulation, ExperimentConfig, ModelKind};
pub use output::{emit_csv, emit_scaling, read_metrics};
pub use presets::{preset, PRESET_NAMES};
pub use run::{run_experiment, Experiment, MetricRow, RunManifest, SolverSummary};
pub use scaling::{fit_loglog_slope, run_scaling_study, ScalingOptions, ScalingTable, Sweep, SweepAxis};
