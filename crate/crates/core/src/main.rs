use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smenkf::error::{Error, Result};
use smenkf::harness::{emit_csv, emit_scaling, preset, run_experiment, run_scaling_study, ExperimentConfig, Sweep};
use smenkf::harness::{ScalingOptions, PRESET_NAMES};

/// Ensemble Kalman filter experiments with an iterative Sherman-Morrison analysis.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a twin experiment with every configured solver and write the results.
    Run {
        #[command(flatten)]
        source: Source,
        /// Worker threads for member forecasts and the blocked solver.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory, overriding the one in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the analysis step over a grid of observation counts or ensemble sizes.
    Scale {
        #[command(flatten)]
        source: Source,
        /// `nobs=a,b,c` or `nens=a,b,c`.
        #[arg(long)]
        sweep: Sweep,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle and property checks.
    Verify,
    /// Print a preset as a TOML config.
    Preset { name: String },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_path(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(Error::Config("either --config or --preset is required".into())),
        };
        cfg.apply_env_overrides()?;
        Ok(cfg)
    }
}

fn apply_common(cfg: &mut ExperimentConfig, workers: Option<usize>, out: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(w) = workers {
        cfg.experiment.workers = w;
    }
    cfg.validate()?;
    Ok(out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir)))
}

fn run(source: &Source, workers: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = source.load()?;
    let dir = apply_common(&mut cfg, workers, out)?;
    cfg.output.dir = dir.display().to_string();
    let manifest = run_experiment(&cfg)?;
    emit_csv(&manifest, &dir)?;
    println!(
        "{}: Nstate = {}, Nobs = {}, Nens = {}, {} cycles",
        cfg.experiment.name,
        manifest.nstate,
        manifest.nobs,
        cfg.experiment.nens,
        cfg.experiment.steps / cfg.experiment.analysis_interval
    );
    println!("{:<10} {:>12} {:>12} {:>12} {:>12}", "solver", "rmse", "forecast_s", "analysis_s", "total_s");
    for s in &manifest.summary {
        println!(
            "{:<10} {:>12.6e} {:>12.3} {:>12.3} {:>12.3}",
            s.solver.name(),
            s.rmse,
            s.forecast_s,
            s.analysis_s,
            s.total_s
        );
    }
    if let Some(f) = manifest.free_run_rmse {
        println!("{:<10} {:>12.6e}", "free", f);
    }
    if !manifest.hashes.consistent {
        eprintln!("warning: solver runs did not share identical inputs");
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn scale(source: &Source, sweep: &Sweep, workers: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = source.load()?;
    let dir = apply_common(&mut cfg, workers, out)?;
    let opts = ScalingOptions {
        solvers: cfg.experiment.solvers.clone(),
        nobs: cfg.scaling.nobs,
        nens: cfg.scaling.nens,
        min_seconds: cfg.scaling.min_seconds,
        max_reps: cfg.scaling.max_reps,
        seed: cfg.seeds.ensemble,
        workers: cfg.experiment.workers,
    };
    let table = run_scaling_study(sweep, &opts)?;
    emit_scaling(&table, &dir)?;
    println!("{:<10} {:>8} {:>6} {:>12} {:>6}", "solver", "nobs", "nens", "analysis_s", "reps");
    for r in &table.rows {
        println!("{:<10} {:>8} {:>6} {:>12.6} {:>6}", r.solver.name(), r.nobs, r.nens, r.analysis_s, r.reps);
    }
    for s in &table.slopes {
        println!("log-log slope vs {}: {} {:.3}", table.axis.name(), s.solver.name(), s.slope);
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn verify() -> ExitCode {
    let checks = smenkf::verify::run_all();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        _ if e.is_config() => ExitCode::from(2),
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => ExitCode::FAILURE,
        _ => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { source, workers, out } => run(source, *workers, out.clone()),
        Command::Scale { source, sweep, workers, out } => scale(source, sweep, *workers, out.clone()),
        Command::Verify => return verify(),
        Command::Preset { name } => preset(name).and_then(|c| c.to_toml_string()).map(|t| print!("{t}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(&cli.command, Command::Preset { .. }) {
                eprintln!("available presets: {}", PRESET_NAMES.join(", "));
            }
            exit_code(&e)
        }
    }
}
