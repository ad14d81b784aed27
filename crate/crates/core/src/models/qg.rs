//! Single-layer quasi-geostrophic vorticity model on a rectangular grid.
//!
//! The prognostic variable is the potential vorticity `q = ζ − F·ψ` on the
//! `(N−2) × (M−2)` interior; the boundary ring is held at zero for `ψ`, `ζ`,
//! `∇²ζ` and `q`. Interior states are stored column-major with the row index
//! running along `x` and the column index along `y`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::DenseMatrix;
use crate::models::{rk4, ModelOperator};

/// States with `‖q‖∞` above this are treated as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

const HELMHOLTZ_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QgConfig {
    pub n: usize,
    pub m: usize,
    pub lx: f64,
    pub ly: f64,
    pub rkb: f64,
    pub rkh: f64,
    pub rkh2: f64,
    pub beta: f64,
    /// Coefficient of the Jacobian term.
    pub r: f64,
    #[serde(default = "default_froude")]
    pub froude: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_froude() -> f64 {
    1600.0
}

fn default_dt() -> f64 {
    1.0
}

impl QgConfig {
    fn instance(n: usize, l: f64) -> Self {
        Self {
            n,
            m: n,
            lx: l,
            ly: l,
            rkb: 1e-6,
            rkh: 1e-7,
            rkh2: 2e-12,
            beta: 1.0,
            r: 1e-5,
            froude: default_froude(),
            dt: default_dt(),
        }
    }

    pub fn qg33() -> Self {
        Self::instance(33, 0.4)
    }

    pub fn qg65() -> Self {
        Self::instance(65, 1.0)
    }

    pub fn qg129() -> Self {
        Self::instance(129, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.n - 2
    }

    pub fn ny(&self) -> usize {
        self.m - 2
    }

    pub fn nstate(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn hx(&self) -> f64 {
        self.lx / (self.n - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / (self.m - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 5 || self.m < 5 {
            return Err(Error::InvalidArgument(format!(
                "QG grid needs at least 5 points per direction, got {}x{}",
                self.n, self.m
            )));
        }
        let all = [self.lx, self.ly, self.rkb, self.rkh, self.rkh2, self.beta, self.r, self.froude, self.dt];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("QG parameters must be finite".into()));
        }
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return Err(Error::InvalidArgument("QG domain lengths must be positive".into()));
        }
        if self.rkb < 0.0 || self.rkh < 0.0 || self.rkh2 < 0.0 {
            return Err(Error::InvalidArgument("QG friction coefficients must be non-negative".into()));
        }
        if self.froude < 0.0 || self.dt < 0.0 {
            return Err(Error::InvalidArgument("QG Froude number and dt must be non-negative".into()));
        }
        Ok(())
    }
}

/// Interior potential vorticity.
#[derive(Clone, Debug, PartialEq)]
pub struct QgState {
    pub q: DenseMatrix,
}

impl QgState {
    pub fn from_vec(cfg: &QgConfig, q: Vec<f64>) -> Result<Self> {
        Ok(Self { q: DenseMatrix::from_col_major(cfg.nx(), cfg.ny(), q)? })
    }

    pub fn zeros(cfg: &QgConfig) -> Self {
        Self { q: DenseMatrix::zeros(cfg.nx(), cfg.ny()) }
    }

    pub fn as_vec(&self) -> &[f64] {
        self.q.as_slice()
    }
}

/// Orthonormal discrete sine basis and Laplacian eigenvalues for `n` interior points.
fn sine_basis(n: usize, h: f64) -> (DenseMatrix, Vec<f64>) {
    let c = (2.0 / (n + 1) as f64).sqrt();
    let s = DenseMatrix::from_fn(n, n, |i, k| c * (PI * ((i + 1) * (k + 1)) as f64 / (n + 1) as f64).sin());
    let lambda = (1..=n)
        .map(|k| {
            let t = (PI * k as f64 / (2 * (n + 1)) as f64).sin();
            -4.0 / (h * h) * t * t
        })
        .collect();
    (s, lambda)
}

/// Direct solver for `(∇² − F)·ψ = q` with `ψ = 0` on the boundary.
///
/// The 5-point operator is diagonalized by discrete sine transforms in both
/// directions, so a solve is four dense products with the (symmetric,
/// orthogonal) sine matrices and one pointwise division.
#[derive(Clone, Debug)]
pub struct HelmholtzSolver {
    sx: DenseMatrix,
    sy: DenseMatrix,
    lx: Vec<f64>,
    ly: Vec<f64>,
    froude: f64,
    hx: f64,
    hy: f64,
}

impl HelmholtzSolver {
    pub fn new(cfg: &QgConfig) -> Result<Self> {
        cfg.validate()?;
        let (sx, lx) = sine_basis(cfg.nx(), cfg.hx());
        let (sy, ly) = sine_basis(cfg.ny(), cfg.hy());
        Ok(Self { sx, sy, lx, ly, froude: cfg.froude, hx: cfg.hx(), hy: cfg.hy() })
    }

    /// `(∇² − F)·ψ` on the interior.
    pub fn apply(&self, psi: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("Helmholtz operand rows", self.lx.len(), psi.rows())?;
        check_dim("Helmholtz operand columns", self.ly.len(), psi.cols())?;
        let (nx, ny) = psi.shape();
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                0.0
            } else {
                psi[(i as usize, j as usize)]
            }
        };
        let (ax, ay) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        Ok(DenseMatrix::from_fn(nx, ny, |i, j| {
            let (i, j) = (i as isize, j as isize);
            let c = at(i, j);
            ax * (at(i + 1, j) - 2.0 * c + at(i - 1, j)) + ay * (at(i, j + 1) - 2.0 * c + at(i, j - 1))
                - self.froude * c
        }))
    }

    pub fn solve(&self, q: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("Helmholtz right-hand side rows", self.lx.len(), q.rows())?;
        check_dim("Helmholtz right-hand side columns", self.ly.len(), q.cols())?;
        let mut hat = self.sx.matmul(q)?.matmul(&self.sy)?;
        for j in 0..hat.cols() {
            for i in 0..hat.rows() {
                hat[(i, j)] /= self.lx[i] + self.ly[j] - self.froude;
            }
        }
        let psi = self.sx.matmul(&hat)?.matmul(&self.sy)?;

        let scale = 4.0 / (self.hx * self.hx) + 4.0 / (self.hy * self.hy) + self.froude;
        let resid = self.apply(&psi)?.sub(q)?.max_abs();
        let bound = HELMHOLTZ_TOL * (q.max_abs() + scale * psi.max_abs());
        if !(resid <= bound) && resid > 0.0 {
            return Err(Error::SolverNonConvergence { residual: resid });
        }
        Ok(psi)
    }
}

/// Stream function for interior potential vorticity `q`.
pub fn helmholtz_solve(q: &QgState, cfg: &QgConfig) -> Result<DenseMatrix> {
    HelmholtzSolver::new(cfg)?.solve(&q.q)
}

/// Full `N × M` grid function with a zero boundary ring around `interior`.
fn embed(interior: &DenseMatrix) -> DenseMatrix {
    let (nx, ny) = interior.shape();
    let mut full = DenseMatrix::zeros(nx + 2, ny + 2);
    for j in 0..ny {
        full.col_mut(j + 1)[1..=nx].copy_from_slice(interior.col(j));
    }
    full
}

fn laplacian_interior(full: &DenseMatrix, hx: f64, hy: f64) -> DenseMatrix {
    let (n, m) = full.shape();
    let (ax, ay) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    DenseMatrix::from_fn(n - 2, m - 2, |i, j| {
        let (i, j) = (i + 1, j + 1);
        let c = full[(i, j)];
        ax * (full[(i + 1, j)] - 2.0 * c + full[(i - 1, j)]) + ay * (full[(i, j + 1)] - 2.0 * c + full[(i, j - 1)])
    })
}

/// Arakawa discretization of `a_x·b_y − a_y·b_x` on a full grid.
///
/// Evaluated at every grid point, including the boundary ring, with values
/// outside the grid taken as zero. With `a` and `b` vanishing on the ring the
/// grid sums of `J`, `a·J` and `b·J` are zero up to rounding.
pub fn arakawa_jacobian(a: &DenseMatrix, b: &DenseMatrix, hx: f64, hy: f64) -> Result<DenseMatrix> {
    check_dim("Jacobian operand rows", a.rows(), b.rows())?;
    check_dim("Jacobian operand columns", a.cols(), b.cols())?;
    let (n, m) = a.shape();
    let get = |f: &DenseMatrix, i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= n as isize || j >= m as isize {
            0.0
        } else {
            f[(i as usize, j as usize)]
        }
    };
    let c = 1.0 / (12.0 * hx * hy);
    Ok(DenseMatrix::from_fn(n, m, |i, j| {
        let (i, j) = (i as isize, j as isize);
        let a_ = |di: isize, dj: isize| get(a, i + di, j + dj);
        let b_ = |di: isize, dj: isize| get(b, i + di, j + dj);
        let j1 = (a_(1, 0) - a_(-1, 0)) * (b_(0, 1) - b_(0, -1)) - (a_(0, 1) - a_(0, -1)) * (b_(1, 0) - b_(-1, 0));
        let j2 = a_(1, 0) * (b_(1, 1) - b_(1, -1))
            - a_(-1, 0) * (b_(-1, 1) - b_(-1, -1))
            - a_(0, 1) * (b_(1, 1) - b_(-1, 1))
            + a_(0, -1) * (b_(1, -1) - b_(-1, -1));
        let j3 = b_(0, 1) * (a_(1, 1) - a_(-1, 1))
            - b_(0, -1) * (a_(1, -1) - a_(-1, -1))
            - b_(1, 0) * (a_(1, 1) - a_(1, -1))
            + b_(-1, 0) * (a_(-1, 1) - a_(-1, -1));
        c * (j1 + j2 + j3)
    }))
}

fn tendency_with(solver: &HelmholtzSolver, cfg: &QgConfig, q: &DenseMatrix) -> Result<DenseMatrix> {
    let (hx, hy) = (cfg.hx(), cfg.hy());
    let psi = solver.solve(q)?;
    let zeta = q.add(&psi.scaled(cfg.froude))?;
    let psi_full = embed(&psi);
    let q_full = embed(q);
    let zeta_full = embed(&zeta);
    let lap_zeta = laplacian_interior(&zeta_full, hx, hy);
    let bilap_zeta = laplacian_interior(&embed(&lap_zeta), hx, hy);
    // J(ψ, q) = q_x ψ_y − q_y ψ_x
    let jac = arakawa_jacobian(&q_full, &psi_full, hx, hy)?;

    Ok(DenseMatrix::from_fn(cfg.nx(), cfg.ny(), |i, j| {
        let psi_x = (psi_full[(i + 2, j + 1)] - psi_full[(i, j + 1)]) / (2.0 * hx);
        let y = (j + 1) as f64 * hy;
        -cfg.r * jac[(i + 1, j + 1)] - cfg.beta * psi_x - cfg.rkb * zeta[(i, j)] + cfg.rkh * lap_zeta[(i, j)]
            - cfg.rkh2 * bilap_zeta[(i, j)]
            + (2.0 * PI * y).sin()
    }))
}

/// `∂q/∂t = −r·J(ψ,q) − β·ψ_x − rkb·ζ + rkh·∇²ζ − rkh2·∇⁴ζ + sin(2πy)`.
pub fn qg_tendency(q: &QgState, cfg: &QgConfig) -> Result<QgState> {
    let solver = HelmholtzSolver::new(cfg)?;
    Ok(QgState { q: tendency_with(&solver, cfg, &q.q)? })
}

/// One RK4 step of length `cfg.dt`.
pub fn qg_step(q: &QgState, cfg: &QgConfig) -> Result<QgState> {
    let model = QgModel::new(cfg.clone())?;
    let next = model.step(q.as_vec())?;
    QgState::from_vec(cfg, next)
}

/// QG forecast operator with a cached Helmholtz solver.
#[derive(Clone, Debug)]
pub struct QgModel {
    pub config: QgConfig,
    solver: HelmholtzSolver,
}

impl QgModel {
    pub fn new(config: QgConfig) -> Result<Self> {
        let solver = HelmholtzSolver::new(&config)?;
        Ok(Self { config, solver })
    }

    /// Interior stream function of a flat state vector.
    pub fn stream_function(&self, q: &[f64]) -> Result<Vec<f64>> {
        let q = DenseMatrix::from_col_major(self.config.nx(), self.config.ny(), q.to_vec())?;
        Ok(self.solver.solve(&q)?.into_vec())
    }

    pub fn tendency(&self, q: &[f64]) -> Result<Vec<f64>> {
        let q = DenseMatrix::from_col_major(self.config.nx(), self.config.ny(), q.to_vec())?;
        Ok(tendency_with(&self.solver, &self.config, &q)?.into_vec())
    }
}

impl ModelOperator for QgModel {
    fn dt(&self) -> f64 {
        self.config.dt
    }

    fn state_len(&self) -> usize {
        self.config.nstate()
    }

    fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("QG state length", self.config.nstate(), x.len())?;
        if self.config.dt == 0.0 {
            return Ok(x.to_vec());
        }
        let out = rk4(x, self.config.dt, |s| self.tendency(s))?;
        let max_abs = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(max_abs <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step: 1, max_abs });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, RngStream, RowStd};

    fn small() -> QgConfig {
        QgConfig { n: 11, m: 9, lx: 1.0, ly: 0.8, ..QgConfig::qg33() }
    }

    fn random_interior(cfg: &QgConfig, seed: u64) -> DenseMatrix {
        gaussian_matrix(&mut RngStream::new(seed), cfg.nx(), cfg.ny(), 0.0, RowStd::Scalar(1.0)).unwrap()
    }

    #[test]
    fn state_sizes() {
        assert_eq!(QgConfig::qg33().nstate(), 961);
        assert_eq!(QgConfig::qg65().nstate(), 3969);
        assert_eq!(QgConfig::qg129().nstate(), 16129);
    }

    #[test]
    fn homogeneous_problem() {
        let cfg = small();
        let psi = helmholtz_solve(&QgState::zeros(&cfg), &cfg).unwrap();
        assert!(psi.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn solve_inverts_apply_and_is_linear() {
        let cfg = small();
        let solver = HelmholtzSolver::new(&cfg).unwrap();
        let (q1, q2) = (random_interior(&cfg, 1), random_interior(&cfg, 2));
        let p1 = solver.solve(&q1).unwrap();
        let p2 = solver.solve(&q2).unwrap();
        let p12 = solver.solve(&q1.add(&q2).unwrap()).unwrap();
        assert!(p12.max_abs_diff(&p1.add(&p2).unwrap()) <= 1e-10 * p12.max_abs());
        let back = solver.apply(&p1).unwrap();
        assert!(back.max_abs_diff(&q1) <= 1e-10 * q1.max_abs());
    }

    #[test]
    fn operator_is_symmetric() {
        let cfg = small();
        let solver = HelmholtzSolver::new(&cfg).unwrap();
        let (u, v) = (random_interior(&cfg, 3), random_interior(&cfg, 4));
        let dot =
            |a: &DenseMatrix, b: &DenseMatrix| a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum::<f64>();
        let lhs = dot(&solver.apply(&u).unwrap(), &v);
        let rhs = dot(&u, &solver.apply(&v).unwrap());
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
    }

    #[test]
    fn jacobian_properties() {
        let cfg = small();
        let a = embed(&random_interior(&cfg, 5));
        let b = embed(&random_interior(&cfg, 6));
        let (hx, hy) = (cfg.hx(), cfg.hy());
        let jab = arakawa_jacobian(&a, &b, hx, hy).unwrap();
        let jba = arakawa_jacobian(&b, &a, hx, hy).unwrap();
        assert!(jab.add(&jba).unwrap().max_abs() <= 1e-12 * jab.max_abs());
        assert!(arakawa_jacobian(&a, &a, hx, hy).unwrap().max_abs() <= 1e-12 * jab.max_abs());
        let sum = |f: &dyn Fn(usize) -> f64| (0..jab.as_slice().len()).map(f).sum::<f64>();
        let scale = jab.max_abs() * jab.as_slice().len() as f64;
        assert!(sum(&|k| jab.as_slice()[k]).abs() <= 1e-10 * scale);
        assert!(sum(&|k| a.as_slice()[k] * jab.as_slice()[k]).abs() <= 1e-10 * scale);
        assert!(sum(&|k| b.as_slice()[k] * jab.as_slice()[k]).abs() <= 1e-10 * scale);
    }

    #[test]
    fn rest_state_feels_forcing_only() {
        let cfg = small();
        let t = qg_tendency(&QgState::zeros(&cfg), &cfg).unwrap();
        for j in 0..cfg.ny() {
            let y = (j + 1) as f64 * cfg.hy();
            let f = (2.0 * PI * y).sin();
            for i in 0..cfg.nx() {
                assert_eq!(t.q[(i, j)], f);
            }
        }
    }

    #[test]
    fn forcing_only_grows_linearly() {
        let cfg = QgConfig { rkb: 0.0, rkh: 0.0, rkh2: 0.0, beta: 0.0, r: 0.0, dt: 0.5, ..small() };
        let mut q = QgState::zeros(&cfg);
        for _ in 0..4 {
            q = qg_step(&q, &cfg).unwrap();
        }
        for j in 0..cfg.ny() {
            let y = (j + 1) as f64 * cfg.hy();
            let f = 2.0 * (2.0 * PI * y).sin();
            for i in 0..cfg.nx() {
                assert!((q.q[(i, j)] - f).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let cfg = QgConfig { dt: 0.0, ..small() };
        let q = QgState { q: random_interior(&cfg, 8) };
        assert_eq!(qg_step(&q, &cfg).unwrap(), q);
    }

    #[test]
    fn rejects_tiny_grid() {
        let cfg = QgConfig { n: 4, ..small() };
        assert!(HelmholtzSolver::new(&cfg).is_err());
    }
}
