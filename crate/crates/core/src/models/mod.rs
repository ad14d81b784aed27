//! Dynamical models used as forecast operators.

mod lorenz96;
mod qg;

pub use lorenz96::{lorenz96_step, lorenz96_tendency, Lorenz96, Lorenz96Config};
pub use qg::{
    arakawa_jacobian, helmholtz_solve, qg_step, qg_tendency, HelmholtzSolver, QgConfig, QgModel, QgState,
    DIVERGENCE_LIMIT,
};

use crate::error::{Error, Result};

/// A discrete-time model advancing a flat state vector by a fixed step `dt`.
pub trait ModelOperator: Sync {
    fn dt(&self) -> f64;

    fn state_len(&self) -> usize;

    /// One step of length `dt`.
    fn step(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `nsteps` consecutive steps; divergence errors carry the step index.
    fn integrate(&self, x: &[f64], nsteps: usize) -> Result<Vec<f64>> {
        let mut state = x.to_vec();
        for k in 0..nsteps {
            state = self.step(&state).map_err(|e| match e {
                Error::Divergence { max_abs, .. } => Error::Divergence { step: k + 1, max_abs },
                other => other,
            })?;
        }
        Ok(state)
    }
}

/// Classical fourth-order Runge-Kutta step for `dx/dt = f(x)`.
pub(crate) fn rk4<F>(x: &[f64], dt: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let stage = |k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + c * ki).collect() };
    let k1 = f(x)?;
    let k2 = f(&stage(&k1, 0.5 * dt))?;
    let k3 = f(&stage(&k2, 0.5 * dt))?;
    let k4 = f(&stage(&k3, dt))?;
    Ok((0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}
