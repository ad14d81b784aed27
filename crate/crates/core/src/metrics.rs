//! Accuracy and timing metrics.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// `sqrt(mean((x_true − x)²))`.
pub fn rse(x_true: &[f64], x: &[f64]) -> Result<f64> {
    check_dim("RSE operand lengths", x_true.len(), x.len())?;
    if x.is_empty() {
        return Err(Error::InvalidArgument("RSE of an empty state".into()));
    }
    let ss: f64 = x_true.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

/// Arithmetic mean of a series of RSE values.
pub fn rmse(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("RMSE of an empty series".into()));
    }
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

/// One row of the error history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub cycle: usize,
    pub time: f64,
    pub rse_forecast: f64,
    pub rse_analysis: f64,
}

/// Error history and accumulated wall time of one filter run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricSeries {
    pub records: Vec<MetricRecord>,
    pub forecast: Duration,
    pub analysis: Duration,
}

impl MetricSeries {
    pub fn push(&mut self, record: MetricRecord) {
        self.records.push(record);
    }

    pub fn add_forecast(&mut self, d: Duration) {
        self.forecast += d;
    }

    pub fn add_analysis(&mut self, d: Duration) {
        self.analysis += d;
    }

    /// RMSE of the analysis errors, skipping the initial record when later ones exist.
    pub fn analysis_rmse(&self) -> Result<f64> {
        let skip = usize::from(self.records.len() > 1);
        let v: Vec<f64> = self.records[skip..].iter().map(|r| r.rse_analysis).collect();
        rmse(&v)
    }

    pub fn forecast_rmse(&self) -> Result<f64> {
        let skip = usize::from(self.records.len() > 1);
        let v: Vec<f64> = self.records[skip..].iter().map(|r| r.rse_forecast).collect();
        rmse(&v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElapsedReport {
    pub forecast_s: f64,
    pub analysis_s: f64,
    pub total_s: f64,
}

/// `total = forecast + analysis`.
pub fn elapsed_report(series: &MetricSeries) -> ElapsedReport {
    let forecast_s = series.forecast.as_secs_f64();
    let analysis_s = series.analysis.as_secs_f64();
    ElapsedReport { forecast_s, analysis_s, total_s: (series.forecast + series.analysis).as_secs_f64() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    #[test]
    fn rse_examples() {
        assert_eq!(rse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rse(&[0.0; 4], &[1.0; 4]).unwrap(), 1.0);
        assert!(rse(&[0.0; 3], &[0.0; 2]).is_err());
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut d2 = Vec::new();
        for i in 0..50 {
            d2.push((a[i] - b[i]).powi(2));
        }
        let naive = (d2.iter().sum::<f64>() / 50.0).sqrt();
        assert!((rse(&a, &b).unwrap() - naive).abs() < 1e-15);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.7]).unwrap(), 0.7);
        assert_eq!(rmse(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(rmse(&[0.25; 9]).unwrap(), 0.25);
        assert!(rmse(&[]).is_err());
        let v: Vec<f64> = (0..100).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let mut acc = 0.0;
        for x in &v {
            acc += x;
        }
        assert!((rmse(&v).unwrap() - acc / 100.0).abs() < 1e-15);
    }

    #[test]
    fn initial_record_is_skipped() {
        let mut s = MetricSeries::default();
        let rec = |cycle, e| MetricRecord { cycle, time: cycle as f64, rse_forecast: e, rse_analysis: e };
        s.push(rec(0, 10.0));
        assert_eq!(s.analysis_rmse().unwrap(), 10.0);
        s.push(rec(1, 1.0));
        s.push(rec(2, 3.0));
        assert_eq!(s.analysis_rmse().unwrap(), 2.0);
    }

    #[test]
    fn elapsed_examples() {
        assert_eq!(elapsed_report(&MetricSeries::default()), ElapsedReport::default());
        let mut s = MetricSeries::default();
        s.add_forecast(Duration::from_secs(2));
        s.add_analysis(Duration::from_secs(3));
        let r = elapsed_report(&s);
        assert_eq!((r.forecast_s, r.analysis_s, r.total_s), (2.0, 3.0, 5.0));
    }

    #[test]
    fn elapsed_matches_clock() {
        let mut s = MetricSeries::default();
        let outer = Instant::now();
        for _ in 0..3 {
            let t = Instant::now();
            std::hint::black_box((0..20_000).map(|i| i as f64).sum::<f64>());
            s.add_forecast(t.elapsed());
            let t = Instant::now();
            std::hint::black_box((0..20_000).map(|i| (i as f64).sqrt()).sum::<f64>());
            s.add_analysis(t.elapsed());
        }
        let wall = outer.elapsed().as_secs_f64();
        let r = elapsed_report(&s);
        assert!((r.total_s - (r.forecast_s + r.analysis_s)).abs() < 1e-9);
        assert!(r.total_s <= wall);
    }
}
