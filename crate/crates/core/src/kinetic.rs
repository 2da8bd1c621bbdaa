//! Operator splitting for the scaled kinetic equation
//! `∂_t f + ε⁻¹ a·∇f = ε⁻² σ(⟨f⟩) L f + ε⁻¹ f m^ε`.
//!
//! Each substep is the exact flow of its own generator: a spectral shift for
//! transport, the closed-form relaxation semigroup, and the pathwise
//! exponential of the integrated noise.

use rand::Rng;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{DensityField, KineticField, Model};
use crate::noise::{sample_path, NoiseModel, NoisePath};
use crate::spectral::Spectral;

/// Largest admissible `|ε⁻¹ ∫ m^ε ds|` in one noise substep.
pub const MAX_NOISE_EXPONENT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    /// `T(Δt/2) N(Δt/2) R(Δt) N(Δt/2) T(Δt/2)`.
    Strang,
    /// `R(Δt) N(Δt) T(Δt)`, first order.
    Lie,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticConfig {
    pub epsilon: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Time between density snapshots; must be a multiple of `dt`.
    pub snapshot_interval: f64,
    pub splitting: Splitting,
}

impl KineticConfig {
    pub fn new(epsilon: f64, dt: f64, horizon: f64, snapshot_interval: f64) -> Result<Self> {
        let c = Self {
            epsilon,
            dt,
            horizon,
            snapshot_interval,
            splitting: Splitting::Strang,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_splitting(mut self, splitting: Splitting) -> Self {
        self.splitting = splitting;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dt > 0.5 * self.epsilon * self.epsilon * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} violates the rule dt <= epsilon^2/2 = {}",
                self.dt,
                0.5 * self.epsilon * self.epsilon
            )));
        }
        steps_between(self.horizon, self.dt, "horizon")?;
        steps_between(self.snapshot_interval, self.dt, "snapshot interval")?;
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn steps_per_snapshot(&self) -> usize {
        (self.snapshot_interval / self.dt).round() as usize
    }
}

/// `interval / dt` as an integer, or an error naming `what`.
pub fn steps_between(interval: f64, dt: f64, what: &str) -> Result<usize> {
    let r = interval / dt;
    let k = r.round();
    if !(interval > 0.0) || k < 1.0 || (r - k).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "{what} {interval} is not a positive multiple of dt = {dt}"
        )));
    }
    Ok(k as usize)
}

/// Largest `dt <= target` that divides `interval` evenly.
pub fn fit_dt(target: f64, interval: f64) -> f64 {
    interval / (interval / target).ceil()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    /// `Δx^N Σ ρ`.
    pub mass: f64,
    /// `‖f‖²` in the `F⁻¹`-weighted space.
    pub energy: f64,
    /// `‖L f‖ / ε`.
    pub defect: f64,
}

#[derive(Debug, Clone)]
pub struct KineticTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<DensityField>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub final_field: KineticField,
}

impl KineticTrajectory {
    pub fn final_density(&self) -> &DensityField {
        self.snapshots
            .last()
            .expect("trajectory has at least the initial snapshot")
    }

    pub fn sup_energy(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.energy).fold(0.0, f64::max)
    }

    /// `∫ ‖ε⁻¹ L f‖² dt` by the trapezoid rule over steps.
    pub fn defect_integral(&self) -> f64 {
        self.diagnostics
            .windows(2)
            .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].defect.powi(2) + w[1].defect.powi(2)))
            .sum()
    }
}

/// Split-step solver bound to one model, optional noise, and configuration.
#[derive(Debug, Clone)]
pub struct KineticSolver<'a> {
    model: &'a Model,
    noise: Option<&'a NoiseModel>,
    config: KineticConfig,
    spectral: Spectral,
    /// Per velocity node: phases for the transport substep (half or full).
    phases: Vec<Vec<Complex64>>,
}

impl<'a> KineticSolver<'a> {
    pub fn new(model: &'a Model, noise: Option<&'a NoiseModel>, config: KineticConfig) -> Result<Self> {
        config.validate()?;
        if let Some(nm) = noise {
            if nm.grid() != model.grid {
                return Err(Error::InvalidConfig("noise grid differs from model grid".into()));
            }
        }
        let spectral = Spectral::new(model.grid);
        let tau = match config.splitting {
            Splitting::Strang => 0.5 * config.dt / config.epsilon,
            Splitting::Lie => config.dt / config.epsilon,
        };
        let phases = model
            .velocity
            .speeds()
            .iter()
            .map(|a| spectral.shift_phases([a[0] * tau, a[1] * tau]))
            .collect();
        Ok(Self {
            model,
            noise,
            config,
            spectral,
            phases,
        })
    }

    pub fn config(&self) -> &KineticConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// Exact transport over rescaled time `tau`: node `k` is shifted by
    /// `a_k tau`.
    pub fn transport_step(&self, f: &mut KineticField, tau: f64) {
        let mut buf = Vec::with_capacity(f.n_points());
        for (k, a) in self.model.velocity.speeds().iter().enumerate() {
            let phases = self.spectral.shift_phases([a[0] * tau, a[1] * tau]);
            self.spectral.shift_with(f.node_mut(k), &phases, &mut buf);
        }
    }

    fn transport_cached(&self, f: &mut KineticField, buf: &mut Vec<Complex64>) {
        for (k, phases) in self.phases.iter().enumerate() {
            self.spectral.shift_with(f.node_mut(k), phases, buf);
        }
    }

    /// `ε⁻¹ ∫_t^{t+Δt} m^ε(s, x) ds`, from exact occupation times.
    pub fn noise_exponent(&self, path: &NoisePath, t: f64, dt: f64) -> Vec<f64> {
        let npts = self.model.grid.len();
        let Some(nm) = self.noise else {
            return vec![0.0; npts];
        };
        let occ = path.occupation(t, t + dt, nm.n_states());
        let mut out = vec![0.0; npts];
        for (i, o) in occ.iter().enumerate() {
            if *o == 0.0 {
                continue;
            }
            let w = o / self.config.epsilon;
            for (dst, n) in out.iter_mut().zip(nm.state(i)) {
                *dst += w * n;
            }
        }
        out
    }

    /// `exp(ε⁻¹ ∫_t^{t+Δt} m^ε ds)` pointwise.
    pub fn noise_factor(&self, path: &NoisePath, t: f64, dt: f64) -> DensityField {
        DensityField::new(self.noise_exponent(path, t, dt).into_iter().map(f64::exp).collect())
    }

    fn apply_noise(&self, f: &mut KineticField, path: &NoisePath, t: f64, dt: f64, step: usize) -> Result<()> {
        if self.noise.is_none() {
            return Ok(());
        }
        let expo = self.noise_exponent(path, t, dt);
        let worst = expo.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if worst > MAX_NOISE_EXPONENT {
            return Err(Error::NoiseOverflow { step, exponent: worst });
        }
        let factor: Vec<f64> = expo.into_iter().map(f64::exp).collect();
        for k in 0..f.n_velocities() {
            for (v, m) in f.node_mut(k).iter_mut().zip(&factor) {
                *v *= m;
            }
        }
        Ok(())
    }

    /// Advances `f` from `t` to `t + dt`.
    pub fn step(&self, f: &mut KineticField, t: f64, path: &NoisePath, step: usize) -> Result<()> {
        let mut buf = Vec::with_capacity(f.n_points());
        self.step_with(f, t, path, step, &mut buf)
    }

    fn step_with(
        &self,
        f: &mut KineticField,
        t: f64,
        path: &NoisePath,
        step: usize,
        buf: &mut Vec<Complex64>,
    ) -> Result<()> {
        let dt = self.config.dt;
        let eps = self.config.epsilon;
        let tau_r = dt / (eps * eps);
        match self.config.splitting {
            Splitting::Strang => {
                let h = 0.5 * dt;
                self.transport_cached(f, buf);
                self.apply_noise(f, path, t, h, step)?;
                self.model.relax_exact_in_place(f, tau_r);
                self.apply_noise(f, path, t + h, h, step)?;
                self.transport_cached(f, buf);
            }
            Splitting::Lie => {
                self.transport_cached(f, buf);
                self.apply_noise(f, path, t, dt, step)?;
                self.model.relax_exact_in_place(f, tau_r);
            }
        }
        if !f.is_finite() {
            return Err(Error::NonFinite { step });
        }
        Ok(())
    }

    fn diagnostics(&self, f: &KineticField, t: f64) -> StepDiagnostics {
        let rho = self.model.density(f);
        StepDiagnostics {
            t,
            mass: self.model.grid.integrate(&rho.values),
            energy: self.model.weighted_inner(f, f),
            defect: self.model.weighted_norm(&self.model.apply_l(f)) / self.config.epsilon,
        }
    }

    /// Integrates from `f = ρ₀F` along a given noise path. `observer` sees
    /// `(step, t, f)` at the start and after every step.
    pub fn run_with_path<O>(&self, rho0: &DensityField, path: &NoisePath, mut observer: O) -> Result<KineticTrajectory>
    where
        O: FnMut(usize, f64, &KineticField),
    {
        if rho0.len() != self.model.grid.len() || !rho0.is_finite() {
            return Err(Error::InvalidConfig(
                "initial density must be finite and match the grid".into(),
            ));
        }
        let n_steps = self.config.n_steps();
        let every = self.config.steps_per_snapshot();
        let dt = self.config.dt;
        let mut f = self.model.equilibrium_field(rho0);
        let mut buf = Vec::with_capacity(f.n_points());
        let mut times = vec![0.0];
        let mut snapshots = vec![rho0.clone()];
        let mut diagnostics = Vec::with_capacity(n_steps + 1);
        diagnostics.push(self.diagnostics(&f, 0.0));
        observer(0, 0.0, &f);
        for s in 0..n_steps {
            let t = s as f64 * dt;
            self.step_with(&mut f, t, path, s, &mut buf)?;
            let t1 = (s + 1) as f64 * dt;
            diagnostics.push(self.diagnostics(&f, t1));
            observer(s + 1, t1, &f);
            if (s + 1) % every == 0 {
                times.push(t1);
                snapshots.push(self.model.density(&f));
            }
        }
        Ok(KineticTrajectory {
            times,
            snapshots,
            diagnostics,
            final_field: f,
        })
    }

    /// Samples a noise path from `rng` (if noise is on) and integrates.
    pub fn run<R: Rng + ?Sized>(&self, rho0: &DensityField, rng: &mut R) -> Result<KineticTrajectory> {
        let path = self.sample_path(rng)?;
        self.run_with_path(rho0, &path, |_, _, _| {})
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<NoisePath> {
        match self.noise {
            Some(nm) => sample_path(nm, self.config.epsilon, self.config.horizon, rng),
            None => Ok(NoisePath::constant(0, self.config.epsilon, self.config.horizon)),
        }
    }
}
