use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Error, Result};

/// Checks that `m` is a conservative rate matrix: square, nonnegative
/// off-diagonal entries, rows summing to zero.
pub fn validate_generator(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidNoise(format!(
            "generator must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..m.nrows() {
        let mut row = 0.0;
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::InvalidNoise(format!("non-finite rate at ({i}, {j})")));
            }
            if i != j && v < 0.0 {
                return Err(Error::InvalidNoise(format!("negative rate {v} at ({i}, {j})")));
            }
            row += v;
        }
        if row.abs() > 1e-12 * scale {
            return Err(Error::InvalidNoise(format!("row {i} sums to {row}, not 0")));
        }
    }
    Ok(())
}

/// Stationary law `ν` with `νM = 0`, `Σν = 1`, `ν > 0`.
pub fn stationary_law(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    validate_generator(m)?;
    let n = m.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let svd = m.transpose().svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |a, &v| a.max(v));
    let tol = 1e-10 * smax.max(1e-300);
    let null_dim = sv.iter().filter(|&&s| s <= tol).count();
    if null_dim != 1 {
        return Err(Error::NonErgodic(null_dim));
    }
    let idx = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::InvalidNoise("SVD failed".into()))?;
    let raw: Vec<f64> = v_t.row(idx).iter().copied().collect();
    let total: f64 = raw.iter().sum();
    let nu: Vec<f64> = raw.iter().map(|v| v / total).collect();
    if nu.iter().any(|&p| p <= 1e-14) {
        return Err(Error::NonErgodic(null_dim));
    }
    Ok(nu)
}

/// Solves the centered Poisson equation `Mψ = g - ν·g`, `ν·ψ = 0` through
/// the bordered system `[[M, 1], [νᵀ, 0]]`, factored once.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    generator: DMatrix<f64>,
    stationary: Vec<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl PoissonSolver {
    pub fn new(generator: &DMatrix<f64>, stationary: &[f64]) -> Result<Self> {
        let n = generator.nrows();
        let mut b = DMatrix::zeros(n + 1, n + 1);
        b.view_mut((0, 0), (n, n)).copy_from(generator);
        for i in 0..n {
            b[(i, n)] = 1.0;
            b[(n, i)] = stationary[i];
        }
        let lu = b.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularPoisson("bordered generator is singular".into()));
        }
        Ok(Self {
            generator: generator.clone(),
            stationary: stationary.to_vec(),
            lu,
        })
    }

    pub fn len(&self) -> usize {
        self.stationary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stationary.is_empty()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// `ψ = M⁻¹(g - ν·g)` for one vector of per-state values.
    pub fn solve(&self, values: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if values.len() != n {
            return Err(Error::InvalidNoise(format!(
                "expected {n} per-state values, got {}",
                values.len()
            )));
        }
        let mean: f64 = values.iter().zip(&self.stationary).map(|(v, p)| v * p).sum();
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = values[i] - mean;
        }
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularPoisson("LU solve failed".into()))?;
        let psi: Vec<f64> = sol.iter().take(n).copied().collect();
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularPoisson("non-finite solution".into()));
        }
        Ok(psi)
    }

    /// Applies [`solve`](Self::solve) pointwise in `x`: `profiles[i][x]` is
    /// the value in state `i` at grid point `x`.
    pub fn solve_profiles(&self, profiles: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.len();
        let npts = profiles.first().map_or(0, |p| p.len());
        let mut out = vec![vec![0.0; npts]; n];
        let mut vals = vec![0.0; n];
        for x in 0..npts {
            for (v, p) in vals.iter_mut().zip(profiles) {
                *v = p[x];
            }
            let psi = self.solve(&vals)?;
            for (o, p) in out.iter_mut().zip(psi) {
                o[x] = p;
            }
        }
        Ok(out)
    }

    /// The matrix `P` with `M⁻¹(g - ν·g) = P g` for every `g`.
    pub fn operator_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        let mut p = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                p[(i, j)] = col[i];
            }
        }
        Ok(p)
    }

    /// `(M v)_i`.
    pub fn apply_generator(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.generator[(i, j)] * v[j]).sum())
            .collect()
    }
}

/// One-shot `solve_poisson(M, ν, values)`.
pub fn solve_poisson(m: &DMatrix<f64>, nu: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    PoissonSolver::new(m, nu)?.solve(values)
}
