use nalgebra::{DMatrix, SymmetricEigen};

use super::chain::PoissonSolver;
use super::NoiseModel;
use crate::error::{Error, Result};
use crate::model::TorusGrid;

/// Eigenvalues below this (absolute) are clipped to zero.
pub const EIGEN_CLIP: f64 = 1e-10;
/// Eigenvalues below `-PSD_TOLERANCE * λ_max` are an error.
pub const PSD_TOLERANCE: f64 = 1e-8;
/// Modes with `λ_j <= RETAIN_RATIO * λ_max` are dropped from `Q^{1/2}`.
pub const RETAIN_RATIO: f64 = 1e-10;

/// Objects derived from the noise chain that enter the limit equation.
///
/// The kernel `k(x, y) = E ∫_ℝ m_0(y) m_t(x) dt` is kept in factored form
/// `k = N C Nᵀ` where the columns of `N` are the state profiles; the dense
/// matrix is available through [`kernel_matrix`](Self::kernel_matrix).
#[derive(Debug, Clone)]
pub struct NoiseStatistics {
    grid: TorusGrid,
    psi: Vec<Vec<f64>>,
    drift_paper: Vec<f64>,
    drift_effective: Vec<f64>,
    profiles: Vec<Vec<f64>>,
    coupling: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Vec<f64>>,
    c_star: f64,
    solver: PoissonSolver,
}

impl NoiseStatistics {
    pub fn new(model: &NoiseModel) -> Result<Self> {
        let grid = model.grid();
        let solver = model.poisson_solver()?;
        let nu = model.stationary();
        let ns = model.n_states();
        let npts = grid.len();

        let psi = solver.solve_profiles(model.states())?;

        let mut drift_paper = vec![0.0; npts];
        for ((p, n), s) in nu.iter().zip(model.states()).zip(&psi) {
            for x in 0..npts {
                drift_paper[x] += p * n[x] * s[x];
            }
        }

        // k = N C Nᵀ, C_ab = -(ν_b P_ba + ν_a P_ab)
        let p = solver.operator_matrix()?;
        let coupling = DMatrix::from_fn(ns, ns, |a, b| -(nu[b] * p[(b, a)] + nu[a] * p[(a, b)]));

        let drift_effective: Vec<f64> = (0..npts)
            .map(|x| 0.5 * quad_form(&coupling, model.states(), x, x))
            .collect();

        let (eigenvalues, eigenfunctions) = factored_eigen(grid, model.states(), &coupling)?;

        // constant of the uniform noise bounds: profiles, correctors ψ, and the
        // second-order solve M⁻¹(nψ - ν·nψ)
        let npsi: Vec<Vec<f64>> = model
            .states()
            .iter()
            .zip(&psi)
            .map(|(n, s)| n.iter().zip(s).map(|(a, b)| a * b).collect())
            .collect();
        let second = solver.solve_profiles(&npsi)?;
        let c_psi = psi.iter().map(|s| grid.w1inf_norm(s)).fold(0.0, f64::max);
        let c_second = second.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let c_star = model.c_star().max(c_psi).max(c_second);

        Ok(Self {
            grid,
            psi,
            drift_paper,
            drift_effective,
            profiles: model.states().to_vec(),
            coupling,
            eigenvalues,
            eigenfunctions,
            c_star,
            solver,
        })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// `ψ_i = M⁻¹I(n_i)` per state.
    pub fn psi(&self) -> &[Vec<f64>] {
        &self.psi
    }

    /// `H(x) = Σ_i ν_i n_i(x) ψ_i(x)`, the opposite sign of the Itô drift.
    pub fn drift_paper(&self) -> &[f64] {
        &self.drift_paper
    }

    /// `h(x) = k(x, x) / 2 = -H(x)`, the Itô drift consistent with the
    /// Stratonovich form.
    pub fn drift_effective(&self) -> &[f64] {
        &self.drift_effective
    }

    pub fn kernel(&self, x: usize, y: usize) -> f64 {
        quad_form(&self.coupling, &self.profiles, x, y)
    }

    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        DMatrix::from_fn(n, n, |x, y| self.kernel(x, y))
    }

    /// All eigenvalues of `Q` supported by the profiles, clipped at zero,
    /// in decreasing order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `L²`-orthonormal eigenfunctions matching [`eigenvalues`](Self::eigenvalues).
    pub fn eigenfunctions(&self) -> &[Vec<f64>] {
        &self.eigenfunctions
    }

    /// Modes retained in `Q^{1/2}`: `(λ_j, e_j)` with `λ_j > 1e-10 λ_max`.
    pub fn retained_modes(&self) -> Vec<(f64, &[f64])> {
        let max = self.eigenvalues.first().copied().unwrap_or(0.0);
        self.eigenvalues
            .iter()
            .zip(&self.eigenfunctions)
            .filter(|(l, _)| **l > RETAIN_RATIO * max && **l > 0.0)
            .map(|(l, e)| (*l, e.as_slice()))
            .collect()
    }

    pub fn c_star(&self) -> f64 {
        self.c_star
    }

    pub fn poisson_solver(&self) -> &PoissonSolver {
        &self.solver
    }
}

fn quad_form(c: &DMatrix<f64>, profiles: &[Vec<f64>], x: usize, y: usize) -> f64 {
    let ns = profiles.len();
    let mut acc = 0.0;
    for a in 0..ns {
        let na = profiles[a][x];
        if na == 0.0 {
            continue;
        }
        for b in 0..ns {
            acc += na * c[(a, b)] * profiles[b][y];
        }
    }
    acc
}

/// Eigenpairs of `Q u(x) = Δx^N Σ_y k(x, y) u(y)` through the thin QR of the
/// profile matrix: `Δx N C Nᵀ = U (Δx R C Rᵀ) Uᵀ`.
fn factored_eigen(
    grid: TorusGrid,
    profiles: &[Vec<f64>],
    coupling: &DMatrix<f64>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let npts = grid.len();
    let ns = profiles.len();
    let n_mat = DMatrix::from_fn(npts, ns, |x, a| profiles[a][x]);
    let qr = n_mat.qr();
    let u = qr.q();
    let r = qr.r();
    let dv = grid.cell_volume();
    let small = (&r * coupling * r.transpose()) * dv;
    let small = (&small + small.transpose()) * 0.5;
    let eig = SymmetricEigen::new(small);
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(ns);
    for j in 0..eig.eigenvalues.len() {
        let mut l = eig.eigenvalues[j];
        if l < -PSD_TOLERANCE * max.max(EIGEN_CLIP) {
            return Err(Error::KernelNotPsd { eigenvalue: l, max });
        }
        if l < EIGEN_CLIP {
            l = l.max(0.0);
            if l < EIGEN_CLIP {
                l = 0.0;
            }
        }
        let w = eig.eigenvectors.column(j);
        let v = &u * w;
        let scale = 1.0 / dv.sqrt();
        pairs.push((l, v.iter().map(|c| c * scale).collect()));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(pairs.into_iter().unzip())
}
