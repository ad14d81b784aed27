use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{rk4, ModelOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lorenz96Config {
    pub nstate: usize,
    #[serde(default = "default_forcing")]
    pub forcing: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_forcing() -> f64 {
    8.0
}

fn default_dt() -> f64 {
    0.05
}

impl Lorenz96Config {
    pub fn new(nstate: usize) -> Self {
        Self { nstate, forcing: default_forcing(), dt: default_dt() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nstate < 4 {
            return Err(Error::InvalidArgument(format!("Lorenz-96 needs at least 4 variables, got {}", self.nstate)));
        }
        if !(self.dt >= 0.0) || !self.dt.is_finite() || !self.forcing.is_finite() {
            return Err(Error::InvalidArgument("Lorenz-96 dt and forcing must be finite, dt >= 0".into()));
        }
        Ok(())
    }
}

/// `dx_i = (x_{i+1} − x_{i−2})·x_{i−1} − x_i + F`, indices cyclic.
pub fn lorenz96_tendency(x: &[f64], forcing: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("Lorenz-96 needs at least 4 variables, got {n}")));
    }
    Ok((0..n)
        .map(|i| {
            let ip1 = x[(i + 1) % n];
            let im1 = x[(i + n - 1) % n];
            let im2 = x[(i + n - 2) % n];
            (ip1 - im2) * im1 - x[i] + forcing
        })
        .collect())
}

/// One RK4 step of length `cfg.dt`.
pub fn lorenz96_step(x: &[f64], cfg: &Lorenz96Config) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Lorenz-96 state"));
    }
    if cfg.dt == 0.0 {
        return Ok(x.to_vec());
    }
    let out = rk4(x, cfg.dt, |s| lorenz96_tendency(s, cfg.forcing))?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Lorenz-96 state"));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Lorenz96 {
    pub config: Lorenz96Config,
}

impl Lorenz96 {
    pub fn new(config: Lorenz96Config) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl ModelOperator for Lorenz96 {
    fn dt(&self) -> f64 {
        self.config.dt
    }

    fn state_len(&self) -> usize {
        self.config.nstate
    }

    fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        lorenz96_step(x, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points() {
        assert!(lorenz96_tendency(&[8.0; 6], 8.0).unwrap().iter().all(|v| *v == 0.0));
        assert!(lorenz96_tendency(&[0.0; 6], 0.0).unwrap().iter().all(|v| *v == 0.0));
        assert!(lorenz96_tendency(&[0.0; 3], 8.0).is_err());
    }

    #[test]
    fn five_point_stencil() {
        // values from a separate scripted evaluation of the stencil
        let t = lorenz96_tendency(&[1.0, 2.0, 3.0, 4.0, 5.0], 8.0).unwrap();
        assert_eq!(t, vec![-3.0, 4.0, 11.0, 13.0, -5.0]);
    }

    #[test]
    fn step_identities() {
        let cfg = Lorenz96Config::new(10);
        assert_eq!(lorenz96_step(&[8.0; 10], &cfg).unwrap(), vec![8.0; 10]);
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let zero = Lorenz96Config { dt: 0.0, ..cfg };
        assert_eq!(lorenz96_step(&x, &zero).unwrap(), x);
    }

    #[test]
    fn one_step_error_shrinks_sixteen_fold() {
        let x: Vec<f64> = (0..12).map(|i| 8.0 + (i as f64).sin()).collect();
        let integrate = |dt: f64, n: usize| {
            let cfg = Lorenz96Config { dt, ..Lorenz96Config::new(12) };
            (0..n).try_fold(x.clone(), |s, _| lorenz96_step(&s, &cfg)).unwrap()
        };
        let span = 0.1;
        let reference = integrate(span / 4096.0, 4096);
        let err = |n: usize| {
            integrate(span / n as f64, n).iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let ratio = err(4) / err(8);
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }
}
