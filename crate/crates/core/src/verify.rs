//! Self-check suite behind the `verify` subcommand.
//!
//! Every check compares library output with an independent evaluation
//! (dense Gaussian elimination, literal recursion, closed forms or measured
//! convergence rates) and reports the worst deviation it saw.

use crate::baseline::{analysis_solve_cholesky, analysis_solve_svd};
use crate::enkf::{
    analysis_step, inflate, influence_matrix_cyclic_scaled, perturb_observations, EnsembleMatrix, InfluenceMatrix,
    ObservationOperator, Stage,
};
use crate::error::Result;
use crate::ismf::{ismf_solve, ismf_solve_blocked, op_count_formula, recursive_sm_solve, recursive_sm_solve_counted};
use crate::linalg::{gaussian_matrix, DenseMatrix, DiagObsCovariance, RngStream, RowStd};
use crate::models::{arakawa_jacobian, HelmholtzSolver, Lorenz96, Lorenz96Config, ModelOperator, QgConfig};
use crate::solver::SolverChoice;

/// Outcome of one check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

/// Runs every check; takes a few seconds.
pub fn run_all() -> Vec<Check> {
    vec![
        Check::from_result("solver agreement", solver_agreement()),
        Check::from_result("recursive oracle", recursive_oracle()),
        Check::from_result("dense Kalman gain", dense_kalman_gain()),
        Check::from_result("operation count", operation_count()),
        Check::from_result("blocked determinism", blocked_determinism()),
        Check::from_result("inflation", inflation()),
        Check::from_result("unit localization", unit_localization()),
        Check::from_result("Helmholtz order", helmholtz_order()),
        Check::from_result("Arakawa conservation", arakawa_conservation()),
        Check::from_result("Lorenz-96 RK4 order", lorenz_rk4_order()),
    ]
}

/// Solves `A·X = B` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &DenseMatrix, b: &DenseMatrix) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut a = a.clone();
    let mut b = b.clone();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))?;
        if a[(p, k)] == 0.0 {
            return None;
        }
        for j in 0..n {
            let t = a[(k, j)];
            a[(k, j)] = a[(p, j)];
            a[(p, j)] = t;
        }
        for j in 0..b.cols() {
            let t = b[(k, j)];
            b[(k, j)] = b[(p, j)];
            b[(p, j)] = t;
        }
        for i in k + 1..n {
            let m = a[(i, k)] / a[(k, k)];
            for j in k..n {
                a[(i, j)] -= m * a[(k, j)];
            }
            for j in 0..b.cols() {
                b[(i, j)] -= m * b[(k, j)];
            }
        }
    }
    for j in 0..b.cols() {
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|c| a[(i, c)] * b[(c, j)]).sum();
            b[(i, j)] = (b[(i, j)] - s) / a[(i, i)];
        }
    }
    Some(b)
}

fn system(rng: &mut RngStream, nobs: usize, nens: usize) -> Result<(DiagObsCovariance, DenseMatrix, DenseMatrix)> {
    let v = gaussian_matrix(rng, nobs, nens, 0.0, RowStd::Scalar(1.0))?;
    let d = gaussian_matrix(rng, nobs, nens, 0.0, RowStd::Scalar(1.0))?;
    let r = DiagObsCovariance::new((0..nobs).map(|_| 0.1 + rng.uniform()).collect())?;
    Ok((r, v, d))
}

fn solver_agreement() -> Result<(bool, String)> {
    let mut rng = RngStream::new(101);
    let mut worst = 0.0f64;
    for k in 0..30 {
        let nobs = 10 + (k * 37) % 300;
        let nens = 2 + (k * 11) % 40;
        let (r, v, d) = system(&mut rng, nobs, nens)?;
        let sher = ismf_solve(&r, &v, &d)?.z;
        let chol = analysis_solve_cholesky(&r, &v, &d)?.z;
        let svd = analysis_solve_svd(&r, &v.scaled(((nens - 1) as f64).sqrt()), &d)?.z;
        let scale = sher.max_abs();
        worst = worst.max(sher.max_abs_diff(&chol) / scale).max(sher.max_abs_diff(&svd) / scale);
    }
    Ok((worst <= 1e-8, format!("max relative deviation {worst:.2e} over 30 systems")))
}

fn recursive_oracle() -> Result<(bool, String)> {
    let mut rng = RngStream::new(102);
    let mut worst = 0.0f64;
    for nens in 1..=6 {
        let (r, v, d) = system(&mut rng, 12, nens)?;
        let z = ismf_solve(&r, &v, &d)?.z;
        for j in 0..nens {
            let col = recursive_sm_solve(&r, &v, d.col(j), nens)?;
            for (a, b) in col.iter().zip(z.col(j)) {
                worst = worst.max((a - b).abs() / z.max_abs());
            }
        }
    }
    let (r, v, _) = system(&mut rng, 5, 3)?;
    let (_, stats) = recursive_sm_solve_counted(&r, &v, &[1.0; 5], 3)?;
    let v1 = stats.base_calls_per_column[0];
    Ok((worst <= 1e-12 && v1 == 4, format!("max deviation {worst:.2e}; base solves for v1 at Nens=3: {v1}")))
}

/// `X + P·Hᵀ·(H·P·Hᵀ + R)⁻¹·D` with everything formed densely.
fn explicit_gain_analysis(
    x: &EnsembleMatrix,
    y: &DenseMatrix,
    h: &DenseMatrix,
    r: &DiagObsCovariance,
) -> Option<DenseMatrix> {
    let (n, m) = (x.nstate(), x.nens());
    let mean: Vec<f64> = (0..n).map(|i| x.x.row(i).iter().sum::<f64>() / m as f64).collect();
    let a = DenseMatrix::from_fn(n, m, |i, j| x.x[(i, j)] - mean[i]);
    let p = a.matmul(&a.transpose()).ok()?.scaled(1.0 / (m - 1) as f64);
    let mut w = h.matmul(&p).ok()?.matmul(&h.transpose()).ok()?;
    for (i, ri) in r.values().iter().enumerate() {
        w[(i, i)] += ri;
    }
    let d = y.sub(&h.matmul(&x.x).ok()?).ok()?;
    let k_d = p.matmul(&h.transpose()).ok()?.matmul(&gauss_solve(&w, &d)?).ok()?;
    x.x.add(&k_d).ok()
}

fn dense_kalman_gain() -> Result<(bool, String)> {
    let mut rng = RngStream::new(103);
    let mut worst = 0.0f64;
    for k in 0..10 {
        let nstate = 6 + k;
        let nens = 3 + k % 5;
        let indices: Vec<usize> = (0..nstate).step_by(1 + k % 3).collect();
        let op = ObservationOperator::selection(nstate, indices.clone())?;
        let hd = DenseMatrix::from_fn(indices.len(), nstate, |i, j| f64::from(u8::from(indices[i] == j)));
        let x = EnsembleMatrix::new(
            gaussian_matrix(&mut rng, nstate, nens, 1.0, RowStd::Scalar(2.0))?,
            Stage::Background,
            0.0,
        )?;
        let r = DiagObsCovariance::new((0..indices.len()).map(|_| 0.2 + rng.uniform()).collect())?;
        let y: Vec<f64> = (0..indices.len()).map(|_| rng.standard_normal()).collect();
        let batch = perturb_observations(&y, &r, nens, &mut rng)?;
        let expected = explicit_gain_analysis(&x, &batch.perturbed, &hd, &r)
            .ok_or(crate::error::Error::NonFinite("dense Kalman oracle"))?;
        for solver in SolverChoice::ALL {
            let got = analysis_step(&x, &batch, &op, &r, solver, None)?;
            worst = worst.max(got.x.max_abs_diff(&expected));
        }
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.2e} over 10 ensembles and 3 solvers")))
}

fn operation_count() -> Result<(bool, String)> {
    let mut rng = RngStream::new(104);
    let pairs = [(1, 1), (2, 5), (3, 7), (4, 10), (8, 3), (16, 40)];
    for &(nens, nobs) in &pairs {
        let (r, v, d) = system(&mut rng, nobs, nens)?;
        let got = ismf_solve(&r, &v, &d)?.op_count.map(|o| o.multiplications_and_divisions);
        let expected = 3 * (nens * nens * nobs + nens * nobs) as u64;
        if got != Some(expected) || op_count_formula(nens, nobs).multiplications_and_divisions != expected {
            return Ok((false, format!("Nens={nens}, Nobs={nobs}: counted {got:?}, expected {expected}")));
        }
    }
    Ok((true, format!("{} size pairs match 3(Nens²Nobs + NensNobs)", pairs.len())))
}

fn blocked_determinism() -> Result<(bool, String)> {
    let mut rng = RngStream::new(105);
    let (r, v, d) = system(&mut rng, 400, 12)?;
    let serial = ismf_solve(&r, &v, &d)?.z;
    let mut worst = 0.0f64;
    for workers in [1, 2, 4] {
        worst = worst.max(ismf_solve_blocked(&r, &v, &d, workers)?.z.max_abs_diff(&serial));
    }
    Ok((worst <= 1e-12, format!("max deviation from serial {worst:.2e}")))
}

fn inflation() -> Result<(bool, String)> {
    let mut rng = RngStream::new(106);
    let x = EnsembleMatrix::new(gaussian_matrix(&mut rng, 7, 5, 0.0, RowStd::Scalar(1.0))?, Stage::Background, 0.0)?;
    let alpha = 1.3;
    let y = inflate(&x, alpha)?;
    let (mx, my) = (x.mean(), y.mean());
    let mean_dev = mx.iter().zip(&my).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let cov = |e: &EnsembleMatrix, m: &[f64]| {
        let c = DenseMatrix::from_fn(e.nstate(), e.nens(), |i, j| e.x[(i, j)] - m[i]);
        c.matmul(&c.transpose()).map(|p| p.scaled(1.0 / (e.nens() - 1) as f64))
    };
    let (px, py) = (cov(&x, &mx)?, cov(&y, &my)?);
    let cov_dev = py.max_abs_diff(&px.scaled(alpha * alpha)) / py.max_abs();
    Ok((
        mean_dev <= 1e-12 && cov_dev <= 1e-10,
        format!("mean shift {mean_dev:.2e}, covariance ratio error {cov_dev:.2e}"),
    ))
}

fn unit_localization() -> Result<(bool, String)> {
    let mut rng = RngStream::new(107);
    let (nstate, nens) = (10, 4);
    let h = ObservationOperator::selection(nstate, vec![0, 2, 5, 9])?;
    let x = EnsembleMatrix::new(
        gaussian_matrix(&mut rng, nstate, nens, 0.0, RowStd::Scalar(1.0))?,
        Stage::Background,
        0.0,
    )?;
    let r = DiagObsCovariance::uniform(4, 0.5)?;
    let batch = perturb_observations(&[0.1, -0.2, 0.3, 0.0], &r, nens, &mut rng)?;
    let ones = InfluenceMatrix::new(DenseMatrix::from_fn(nstate, 4, |_, _| 1.0))?;
    let plain = analysis_step(&x, &batch, &h, &r, SolverChoice::Sherman, None)?;
    let local = analysis_step(&x, &batch, &h, &r, SolverChoice::Sherman, Some(&ones))?;
    let dev = plain.x.max_abs_diff(&local.x);
    // a taper that vanishes everywhere leaves the background untouched
    let none = influence_matrix_cyclic_scaled(nstate, 4, &h, 1.0, Some(0))?;
    let far = DenseMatrix::from_fn(nstate, 4, |i, j| if i == h.index(j) { 0.0 } else { none.delta()[(i, j)] });
    let off = analysis_step(&x, &batch, &h, &r, SolverChoice::Sherman, Some(&InfluenceMatrix::new(far)?))?;
    let still = off.x.max_abs_diff(&x.x);
    Ok((dev <= 1e-12 && still == 0.0, format!("unit taper deviation {dev:.2e}, zero taper change {still:.1e}")))
}

/// Manufactured `ψ = g(x)·g(y)` with `g(s) = s(1 − s)eˢ` on the unit square.
fn helmholtz_error(n: usize) -> Result<f64> {
    let cfg = QgConfig { n, m: n, lx: 1.0, ly: 1.0, ..QgConfig::qg65() };
    let g = |s: f64| s * (1.0 - s) * s.exp();
    let g2 = |s: f64| -(3.0 * s + s * s) * s.exp();
    let h = cfg.hx();
    let coord = |i: usize| (i + 1) as f64 * h;
    let exact = DenseMatrix::from_fn(cfg.nx(), cfg.ny(), |i, j| g(coord(i)) * g(coord(j)));
    let q = DenseMatrix::from_fn(cfg.nx(), cfg.ny(), |i, j| {
        let (x, y) = (coord(i), coord(j));
        g2(x) * g(y) + g(x) * g2(y) - cfg.froude * g(x) * g(y)
    });
    let psi = HelmholtzSolver::new(&cfg)?.solve(&q)?;
    Ok(psi.max_abs_diff(&exact))
}

fn helmholtz_order() -> Result<(bool, String)> {
    let e: Vec<f64> = [17, 33, 65].iter().map(|&n| helmholtz_error(n)).collect::<Result<_>>()?;
    let p1 = (e[0] / e[1]).log2();
    let p2 = (e[1] / e[2]).log2();
    let ok = [p1, p2].iter().all(|p| (1.9..=2.1).contains(p));
    Ok((ok, format!("observed orders {p1:.3}, {p2:.3}")))
}

fn arakawa_conservation() -> Result<(bool, String)> {
    let mut rng = RngStream::new(108);
    let n = 20;
    let ring = |rng: &mut RngStream| {
        DenseMatrix::from_fn(n, n, |i, j| {
            if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                0.0
            } else {
                rng.standard_normal()
            }
        })
    };
    let (a, b) = (ring(&mut rng), ring(&mut rng));
    let j = arakawa_jacobian(&a, &b, 0.1, 0.1)?;
    let sum = |f: &dyn Fn(usize) -> f64| (0..n * n).map(f).sum::<f64>();
    let (js, aj, bj) = (j.as_slice(), a.as_slice(), b.as_slice());
    let worst =
        [sum(&|k| js[k]), sum(&|k| aj[k] * js[k]), sum(&|k| bj[k] * js[k])].iter().fold(0.0f64, |m, s| m.max(s.abs()));
    Ok((worst <= 1e-10, format!("largest conserved-sum magnitude {worst:.2e}")))
}

fn lorenz_rk4_order() -> Result<(bool, String)> {
    let x0: Vec<f64> = (0..12).map(|i| 8.0 + if i == 0 { 0.5 } else { 0.0 } + 0.1 * i as f64).collect();
    let horizon = 0.4;
    let run = |dt: f64| -> Result<Vec<f64>> {
        let model = Lorenz96::new(Lorenz96Config { dt, ..Lorenz96Config::new(12) })?;
        model.integrate(&x0, (horizon / dt).round() as usize)
    };
    let reference = run(0.05 / 256.0)?;
    let err = |dt: f64| -> Result<f64> {
        let x = run(dt)?;
        Ok(x.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    };
    let (e1, e2, e3) = (err(0.05)?, err(0.025)?, err(0.0125)?);
    let p1 = (e1 / e2).log2();
    let p2 = (e2 / e3).log2();
    Ok((p1.min(p2) >= 3.8, format!("observed orders {p1:.3}, {p2:.3}")))
}
