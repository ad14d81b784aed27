//! CSV, JSON and plot-data emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::run::{MetricRow, RunManifest};
use crate::harness::scaling::ScalingTable;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `metrics.csv`, `summary.csv`, `manifest.json` and, when enabled,
/// one `plots/<solver>_<series>.dat` file per curve. Returns the paths written.
pub fn emit_csv(manifest: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join(METRICS_FILE);
    write_metrics(&path, &manifest.metrics)?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["solver", "rmse", "forecast_s", "analysis_s", "total_s"])?;
    for s in &manifest.summary {
        w.write_record([
            s.solver.name().to_string(),
            s.rmse.to_string(),
            format!("{:.3}", s.forecast_s),
            format!("{:.3}", s.analysis_s),
            format!("{:.3}", s.total_s),
        ])?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut f, manifest)?;
    f.write_all(b"\n")?;
    written.push(path);

    if manifest.config.output.plots {
        let plots = dir.join("plots");
        fs::create_dir_all(&plots)?;
        let mut labels: Vec<&str> = manifest.metrics.iter().map(|r| r.solver.as_str()).collect();
        labels.dedup();
        let curves = labels
            .into_iter()
            .map(|l| (l, manifest.metrics.iter().filter(|r| r.solver == l).collect::<Vec<_>>()))
            .chain((!manifest.free_run.is_empty()).then(|| ("free", manifest.free_run.iter().collect())));
        for (label, rows) in curves {
            for (series, pick) in [
                ("rse_forecast", (|r: &MetricRow| r.rse_forecast) as fn(&MetricRow) -> f64),
                ("rse_analysis", |r: &MetricRow| r.rse_analysis),
            ] {
                let path = plots.join(format!("{label}_{series}.dat"));
                let mut text = format!("# time {series}\n");
                for r in &rows {
                    text.push_str(&format!("{} {}\n", r.time, pick(r)));
                }
                fs::write(&path, text)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["cycle", "time", "solver", "rse_forecast", "rse_analysis"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
    Ok(rows)
}

/// Writes `scaling.csv`, `scaling_slopes.csv` and one `plots/scaling_<solver>.dat` per solver.
pub fn emit_scaling(table: &ScalingTable, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("scaling.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["solver", "nobs", "nens", "analysis_s", "reps"])?;
    for r in &table.rows {
        w.write_record([
            r.solver.name().to_string(),
            r.nobs.to_string(),
            r.nens.to_string(),
            format!("{:.6}", r.analysis_s),
            r.reps.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("scaling_slopes.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["solver", "axis", "loglog_slope"])?;
    for s in &table.slopes {
        w.write_record([s.solver.name().to_string(), table.axis.name().to_string(), format!("{:.4}", s.slope)])?;
    }
    w.flush()?;
    written.push(path);

    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    for s in &table.slopes {
        let path = plots.join(format!("scaling_{}.dat", s.solver.name()));
        let mut text = format!("# {} analysis_s\n", table.axis.name());
        for r in table.rows.iter().filter(|r| r.solver == s.solver) {
            text.push_str(&format!("{} {}\n", table.axis.value_of(r), r.analysis_s));
        }
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
