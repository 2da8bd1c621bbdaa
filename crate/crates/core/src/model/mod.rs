//! Discretization of `T^N × V`, the equilibrium structure and the nonlinear
//! relaxation operator `σ(⟨f⟩) L f` with its exact semigroup.

mod field;
mod grid;
mod opacity;
mod velocity;

pub use field::{DensityField, KineticField};
pub use grid::TorusGrid;
pub use opacity::Opacity;
pub use velocity::{gauss_legendre, VelocityQuadrature, VelocitySpec};

use crate::error::{Error, Result};

/// Grid, velocity space and opacity bundled together. Immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: TorusGrid,
    pub velocity: VelocityQuadrature,
    pub opacity: Opacity,
}

impl Model {
    pub fn new(grid: TorusGrid, velocity: VelocityQuadrature, opacity: Opacity) -> Result<Self> {
        if grid.dim() != velocity.dim() {
            return Err(Error::InvalidVelocity(format!(
                "velocity model is {}-D but grid is {}-D",
                velocity.dim(),
                grid.dim()
            )));
        }
        Ok(Self {
            grid,
            velocity,
            opacity,
        })
    }

    pub fn equilibrium_field(&self, rho: &DensityField) -> KineticField {
        KineticField::equilibrium(self.grid, &self.velocity, rho)
    }

    /// `ρ_i = Σ_k w_k f_{ik}`.
    pub fn density(&self, f: &KineticField) -> DensityField {
        let mut rho = vec![0.0; self.grid.len()];
        for (k, w) in self.velocity.weights().iter().enumerate() {
            for (r, v) in rho.iter_mut().zip(f.node(k)) {
                *r += w * v;
            }
        }
        DensityField::new(rho)
    }

    /// Flux `⟨a f⟩` per spatial component.
    pub fn flux(&self, f: &KineticField) -> Vec<Vec<f64>> {
        let dim = self.grid.dim();
        let mut j = vec![vec![0.0; self.grid.len()]; dim];
        for (k, (w, a)) in self.velocity.weights().iter().zip(self.velocity.speeds()).enumerate() {
            for (c, jc) in j.iter_mut().enumerate() {
                let wa = w * a[c];
                for (dst, v) in jc.iter_mut().zip(f.node(k)) {
                    *dst += wa * v;
                }
            }
        }
        j
    }

    /// Inner product of `L²_{F⁻¹}`: `Δx^N Σ_i Σ_k w_k f g / F_k`.
    pub fn weighted_inner(&self, f: &KineticField, g: &KineticField) -> f64 {
        let mut acc = 0.0;
        for (k, (w, eq)) in self
            .velocity
            .weights()
            .iter()
            .zip(self.velocity.equilibrium())
            .enumerate()
        {
            let s: f64 = f.node(k).iter().zip(g.node(k)).map(|(a, b)| a * b).sum();
            acc += w / eq * s;
        }
        acc * self.grid.cell_volume()
    }

    pub fn weighted_norm(&self, f: &KineticField) -> f64 {
        self.weighted_inner(f, f).sqrt()
    }

    /// `L f = ⟨f⟩ F - f`.
    pub fn apply_l(&self, f: &KineticField) -> KineticField {
        let rho = self.density(f);
        let mut out = f.clone();
        for (k, eq) in self.velocity.equilibrium().iter().enumerate() {
            for (dst, r) in out.node_mut(k).iter_mut().zip(&rho.values) {
                *dst = r * eq - *dst;
            }
        }
        out
    }

    /// `σ(⟨f⟩) L f`.
    pub fn relaxation_operator(&self, f: &KineticField) -> KineticField {
        let rho = self.density(f);
        let mut out = self.apply_l(f);
        let sig: Vec<f64> = rho.values.iter().map(|&r| self.opacity.eval(r)).collect();
        for k in 0..self.velocity.len() {
            for (dst, s) in out.node_mut(k).iter_mut().zip(&sig) {
                *dst *= s;
            }
        }
        out
    }

    /// Exact relaxation flow `g(τ, f) = ρF + (f - ρF) e^{-τσ(ρ)}`.
    pub fn relax_exact(&self, f: &KineticField, tau: f64) -> KineticField {
        let mut out = f.clone();
        self.relax_exact_in_place(&mut out, tau);
        out
    }

    pub fn relax_exact_in_place(&self, f: &mut KineticField, tau: f64) {
        debug_assert!(tau >= 0.0);
        let rho = self.density(f);
        let decay: Vec<f64> = rho
            .values
            .iter()
            .map(|&r| (-tau * self.opacity.eval(r)).exp())
            .collect();
        for (k, eq) in self.velocity.equilibrium().iter().enumerate() {
            for ((dst, r), d) in f.node_mut(k).iter_mut().zip(&rho.values).zip(&decay) {
                let e = r * eq;
                *dst = e + (*dst - e) * d;
            }
        }
    }
}
