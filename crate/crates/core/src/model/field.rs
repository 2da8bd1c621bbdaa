use super::{TorusGrid, VelocityQuadrature};

/// Density `ρ(x)` on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self::new(vec![c; grid.len()])
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self::new(grid.points().map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Distribution `f(x, v)` on the space × velocity grid, stored velocity-major:
/// entry `(k, i)` lives at `k * n_points + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticField {
    n_points: usize,
    n_velocities: usize,
    values: Vec<f64>,
}

impl KineticField {
    pub fn zeros(grid: TorusGrid, velocity: &VelocityQuadrature) -> Self {
        Self {
            n_points: grid.len(),
            n_velocities: velocity.len(),
            values: vec![0.0; grid.len() * velocity.len()],
        }
    }

    /// Builds `f` from `(x, node index) -> value`.
    pub fn from_fn(grid: TorusGrid, velocity: &VelocityQuadrature, f: impl Fn([f64; 2], usize) -> f64) -> Self {
        let mut out = Self::zeros(grid, velocity);
        for k in 0..velocity.len() {
            for (i, x) in grid.points().enumerate() {
                out.values[k * grid.len() + i] = f(x, k);
            }
        }
        out
    }

    /// The local equilibrium `ρ(x) F(v)`.
    pub fn equilibrium(grid: TorusGrid, velocity: &VelocityQuadrature, rho: &DensityField) -> Self {
        let mut out = Self::zeros(grid, velocity);
        for (k, fk) in velocity.equilibrium().iter().enumerate() {
            for (dst, r) in out.node_mut(k).iter_mut().zip(&rho.values) {
                *dst = r * fk;
            }
        }
        out
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_velocities(&self) -> usize {
        self.n_velocities
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Spatial profile of velocity node `k`.
    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_points..(k + 1) * self.n_points]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n_points..(k + 1) * self.n_points]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[k * self.n_points + i]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_compatible(&self, grid: TorusGrid, velocity: &VelocityQuadrature) -> bool {
        self.n_points == grid.len() && self.n_velocities == velocity.len()
    }
}
