use nalgebra::DMatrix;

use super::chain::{stationary_law, PoissonSolver};
use crate::error::{Error, Result};
use crate::model::TorusGrid;

/// Stationary, centered Markov jump process on a finite set of spatial
/// profiles `n_i`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    grid: TorusGrid,
    states: Vec<Vec<f64>>,
    generator: DMatrix<f64>,
    stationary: Vec<f64>,
    /// `max_i ‖n_i‖_{W^{1,∞}}` on the grid.
    c_star: f64,
}

impl NoiseModel {
    /// Builds a model from already-centered profiles. Fails if
    /// `Σ ν_i n_i(x) ≠ 0` at some grid point.
    pub fn new(grid: TorusGrid, states: Vec<Vec<f64>>, generator: DMatrix<f64>) -> Result<Self> {
        if states.len() != generator.nrows() {
            return Err(Error::InvalidNoise(format!(
                "{} profiles for a {}-state generator",
                states.len(),
                generator.nrows()
            )));
        }
        if states.iter().any(|s| s.len() != grid.len()) {
            return Err(Error::InvalidNoise("profile length does not match the grid".into()));
        }
        if states.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidNoise("non-finite profile value".into()));
        }
        let stationary = stationary_law(&generator)?;
        let scale = states.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        for x in 0..grid.len() {
            let mean: f64 = states.iter().zip(&stationary).map(|(s, p)| p * s[x]).sum();
            if mean.abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::InvalidNoise(format!(
                    "noise is not centered: mean {mean:e} at grid point {x}"
                )));
            }
        }
        let c_star = states.iter().map(|s| grid.w1inf_norm(s)).fold(0.0, f64::max);
        Ok(Self {
            grid,
            states,
            generator,
            stationary,
            c_star,
        })
    }

    /// Like [`new`](Self::new) but subtracts the stationary mean first.
    pub fn centered(grid: TorusGrid, mut states: Vec<Vec<f64>>, generator: DMatrix<f64>) -> Result<Self> {
        let nu = stationary_law(&generator)?;
        if states.len() != nu.len() {
            return Err(Error::InvalidNoise(format!(
                "{} profiles for a {}-state generator",
                states.len(),
                nu.len()
            )));
        }
        for x in 0..grid.len() {
            let mean: f64 = states.iter().zip(&nu).map(|(s, p)| p * s[x]).sum();
            for s in states.iter_mut() {
                s[x] -= mean;
            }
        }
        Self::new(grid, states, generator)
    }

    /// Two states `±profile` switching at rate `rate` in both directions.
    pub fn telegraph(grid: TorusGrid, profile: Vec<f64>, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidNoise(format!(
                "telegraph rate must be positive, got {rate}"
            )));
        }
        let minus = profile.iter().map(|v| -v).collect();
        let m = DMatrix::from_row_slice(2, 2, &[-rate, rate, rate, -rate]);
        Self::new(grid, vec![profile, minus], m)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn c_star(&self) -> f64 {
        self.c_star
    }

    /// Total jump rate out of state `i`, `-M_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.generator[(i, i)]
    }

    pub fn poisson_solver(&self) -> Result<PoissonSolver> {
        PoissonSolver::new(&self.generator, &self.stationary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncentered_profiles_rejected() {
        let g = TorusGrid::new(8, 1).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        let err = NoiseModel::new(g, vec![vec![1.0; 8], vec![-1.0; 8]], m.clone()).unwrap_err();
        assert!(err.to_string().contains("not centered"));
        let ok = NoiseModel::centered(g, vec![vec![1.0; 8], vec![-1.0; 8]], m).unwrap();
        // ν = (2/3, 1/3)
        assert!((ok.stationary()[0] - 2.0 / 3.0).abs() < 1e-14);
        let mean = ok.stationary()[0] * ok.state(0)[3] + ok.stationary()[1] * ok.state(1)[3];
        assert!(mean.abs() < 1e-15);
    }

    #[test]
    fn c_star_records_gradient() {
        let g = TorusGrid::new(64, 1).unwrap();
        let prof: Vec<f64> = g.points().map(|x| (2.0 * std::f64::consts::PI * x[0]).cos()).collect();
        let t = NoiseModel::telegraph(g, prof, 1.0).unwrap();
        // max difference quotient approaches 2π from below
        assert!(t.c_star() > 6.2 && t.c_star() < 2.0 * std::f64::consts::PI);
    }
}
