//! The stochastic Rosseland equation
//! `dρ = div(σ(ρ)⁻¹ K ∇ρ) dt + h ρ dt + ρ Q^{1/2} dW`
//! on the torus grid, stepped explicitly.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kinetic::steps_between;
use crate::model::{DensityField, Model, Opacity};
use crate::noise::NoiseStatistics;
use crate::spectral::Spectral;

/// Stability constant in `dt <= c Δx² σ_* / ‖K‖` for one space dimension;
/// divided by the dimension on 2-D grids.
pub const STABILITY: f64 = 0.2;

/// Which field plays the Itô drift coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Drift {
    /// `h = ½ k(x, x)`.
    Effective,
    /// `H = Σ ν_i n_i ψ_i`.
    Paper,
    Off,
}

impl std::str::FromStr for Drift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "effective" => Ok(Drift::Effective),
            "paper" => Ok(Drift::Paper),
            "off" => Ok(Drift::Off),
            other => Err(Error::InvalidConfig(format!(
                "drift must be one of paper, effective, off; got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for Drift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Drift::Effective => "effective",
            Drift::Paper => "paper",
            Drift::Off => "off",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdeConfig {
    pub dt: f64,
    pub horizon: f64,
    pub snapshot_interval: f64,
    /// `false` drops the Rosseland term (pointwise SDE test mode).
    pub diffusion: bool,
    pub drift: Drift,
    /// `false` drops the stochastic integral.
    pub noise: bool,
}

impl SpdeConfig {
    pub fn new(dt: f64, horizon: f64, snapshot_interval: f64) -> Self {
        Self {
            dt,
            horizon,
            snapshot_interval,
            diffusion: true,
            drift: Drift::Effective,
            noise: true,
        }
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = drift;
        self
    }

    pub fn without_diffusion(mut self) -> Self {
        self.diffusion = false;
        self
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self.drift = Drift::Off;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Largest stable explicit step for the model.
pub fn max_stable_dt(model: &Model) -> f64 {
    let dx = model.grid.spacing();
    STABILITY / model.grid.dim() as f64 * dx * dx * model.opacity.sigma_star() / model.velocity.diffusion_norm()
}

/// `G(ρ) = ∫_0^ρ dy/σ(y)` pointwise.
pub fn opacity_primitive(rho: &DensityField, opacity: &Opacity) -> Result<DensityField> {
    let values = rho
        .values
        .iter()
        .map(|&r| opacity.primitive(r))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityField::new(values))
}

/// `div(K ∇ G(ρ))` computed spectrally.
pub fn rosseland_rhs(
    spectral: &Spectral,
    opacity: &Opacity,
    k: &[[f64; 2]; 2],
    rho: &DensityField,
) -> Result<DensityField> {
    let g = opacity_primitive(rho, opacity)?;
    Ok(DensityField::new(spectral.diffusion(&g.values, k)))
}

#[derive(Debug, Clone)]
pub struct SpdeTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<DensityField>,
    /// Per step, including `t = 0`: `Δx^N Σ ρ`.
    pub mass: Vec<f64>,
    /// Per step, including `t = 0`: `‖ρ‖_{L²}`.
    pub l2: Vec<f64>,
    pub min_density: f64,
}

impl SpdeTrajectory {
    pub fn final_density(&self) -> &DensityField {
        self.snapshots
            .last()
            .expect("trajectory has at least the initial snapshot")
    }
}

#[derive(Debug, Clone)]
pub struct SpdeSolver<'a> {
    model: &'a Model,
    config: SpdeConfig,
    spectral: Spectral,
    k: [[f64; 2]; 2],
    drift: Vec<f64>,
    /// `√λ_j e_j` for the retained modes.
    modes: Vec<Vec<f64>>,
}

impl<'a> SpdeSolver<'a> {
    pub fn new(model: &'a Model, stats: Option<&NoiseStatistics>, config: SpdeConfig) -> Result<Self> {
        if !(config.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", config.dt)));
        }
        steps_between(config.horizon, config.dt, "horizon")?;
        steps_between(config.snapshot_interval, config.dt, "snapshot interval")?;
        if config.diffusion {
            if !model.opacity.has_primitive() {
                return Err(Error::UnsupportedOpacity(
                    "the limit solver needs a closed-form primitive of 1/sigma".into(),
                ));
            }
            let limit = max_stable_dt(model);
            if config.dt > limit * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "dt = {} violates the stability rule dt <= {STABILITY} dx^2 sigma_star / |K| / dim = {limit}",
                    config.dt
                )));
            }
        }
        let npts = model.grid.len();
        if (config.noise || config.drift != Drift::Off) && stats.is_none() {
            return Err(Error::InvalidConfig(
                "noise statistics are required when noise or drift is on".into(),
            ));
        }
        if let Some(s) = stats {
            if s.grid() != model.grid {
                return Err(Error::InvalidConfig("noise grid differs from model grid".into()));
            }
        }
        let drift = match (config.drift, stats) {
            (Drift::Effective, Some(s)) => s.drift_effective().to_vec(),
            (Drift::Paper, Some(s)) => s.drift_paper().to_vec(),
            _ => vec![0.0; npts],
        };
        let modes = match (config.noise, stats) {
            (true, Some(s)) => s
                .retained_modes()
                .into_iter()
                .map(|(l, e)| e.iter().map(|v| l.sqrt() * v).collect())
                .collect(),
            _ => Vec::new(),
        };
        Ok(Self {
            model,
            spectral: Spectral::new(model.grid),
            k: model.velocity.diffusion_matrix(),
            config,
            drift,
            modes,
        })
    }

    pub fn config(&self) -> &SpdeConfig {
        &self.config
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Deterministic part `div(σ(ρ)⁻¹K∇ρ) + hρ`.
    pub fn deterministic_rhs(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let mut out = if self.config.diffusion {
            rosseland_rhs(
                &self.spectral,
                &self.model.opacity,
                &self.k,
                &DensityField::new(rho.to_vec()),
            )?
            .values
        } else {
            vec![0.0; rho.len()]
        };
        for ((o, h), r) in out.iter_mut().zip(&self.drift).zip(rho) {
            *o += h * r;
        }
        Ok(out)
    }

    /// One Euler–Maruyama step.
    pub fn step<R: Rng + ?Sized>(&self, rho: &mut DensityField, step: usize, rng: &mut R) -> Result<()> {
        let dt = self.config.dt;
        let det = self.deterministic_rhs(&rho.values)?;
        let mut noise = vec![0.0; rho.len()];
        for e in &self.modes {
            let xi: f64 = rng.sample(StandardNormal);
            for (n, v) in noise.iter_mut().zip(e) {
                *n += v * xi;
            }
        }
        let sq = dt.sqrt();
        for ((r, d), n) in rho.values.iter_mut().zip(&det).zip(&noise) {
            *r += dt * d + sq * *r * n;
        }
        if !rho.is_finite() {
            return Err(Error::NonFinite { step });
        }
        Ok(())
    }

    /// Integrates from `ρ₀`. Without noise a negative density aborts the run.
    pub fn run<R: Rng + ?Sized>(&self, rho0: &DensityField, rng: &mut R) -> Result<SpdeTrajectory> {
        self.integrate(rho0, |rho, s| self.step(rho, s, rng))
    }

    /// Classical RK4 on the deterministic part, for reference solutions.
    pub fn run_rk4(&self, rho0: &DensityField) -> Result<SpdeTrajectory> {
        let dt = self.config.dt;
        self.integrate(rho0, |rho, s| {
            let y = &rho.values;
            let k1 = self.deterministic_rhs(y)?;
            let k2 = self.deterministic_rhs(&axpy(y, 0.5 * dt, &k1))?;
            let k3 = self.deterministic_rhs(&axpy(y, 0.5 * dt, &k2))?;
            let k4 = self.deterministic_rhs(&axpy(y, dt, &k3))?;
            for (i, r) in rho.values.iter_mut().enumerate() {
                *r += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if !rho.is_finite() {
                return Err(Error::NonFinite { step: s });
            }
            Ok(())
        })
    }

    fn integrate<S>(&self, rho0: &DensityField, mut stepper: S) -> Result<SpdeTrajectory>
    where
        S: FnMut(&mut DensityField, usize) -> Result<()>,
    {
        let grid = self.model.grid;
        if rho0.len() != grid.len() || !rho0.is_finite() {
            return Err(Error::InvalidConfig(
                "initial density must be finite and match the grid".into(),
            ));
        }
        let n_steps = self.config.n_steps();
        let every = steps_between(self.config.snapshot_interval, self.config.dt, "snapshot interval")?;
        let deterministic = self.modes.is_empty();
        let mut rho = rho0.clone();
        let mut times = vec![0.0];
        let mut snapshots = vec![rho0.clone()];
        let mut mass = vec![grid.integrate(&rho.values)];
        let mut l2 = vec![grid.l2_norm(&rho.values)];
        let mut min_density = rho.min();
        for s in 0..n_steps {
            stepper(&mut rho, s)?;
            let m = rho.min();
            min_density = min_density.min(m);
            if deterministic && m <= 0.0 && rho0.min() > 0.0 {
                return Err(Error::PositivityLost { step: s, min: m });
            }
            mass.push(grid.integrate(&rho.values));
            l2.push(grid.l2_norm(&rho.values));
            if (s + 1) % every == 0 {
                times.push((s + 1) as f64 * self.config.dt);
                snapshots.push(rho.clone());
            }
        }
        Ok(SpdeTrajectory {
            times,
            snapshots,
            mass,
            l2,
            min_density,
        })
    }
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TorusGrid, VelocityQuadrature, VelocitySpec};
    use crate::noise::NoiseModel;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn gt2(n: usize, opacity: Opacity) -> Model {
        let g = TorusGrid::new(n, 1).unwrap();
        Model::new(g, VelocityQuadrature::build(VelocitySpec::Gt2, 1).unwrap(), opacity).unwrap()
    }

    #[test]
    fn primitive_examples() {
        let g = TorusGrid::new(8, 1).unwrap();
        let rho = DensityField::from_fn(g, |x| 3.0 * x[0] - 1.0);
        let one = opacity_primitive(&rho, &Opacity::constant(1.0).unwrap()).unwrap();
        assert_eq!(one, rho);
        let rat = opacity_primitive(&rho, &Opacity::rational(1.0, 2.0).unwrap()).unwrap();
        for (g, r) in rat.values.iter().zip(&rho.values) {
            let exact = r - (r / 2f64.sqrt()).atan() / 2f64.sqrt();
            assert!((g - exact).abs() < 1e-15);
        }
        assert_eq!(Opacity::rational(1.0, 2.0).unwrap().primitive(0.0).unwrap(), 0.0);
    }

    #[test]
    fn rhs_examples() {
        let m = gt2(32, Opacity::constant(1.0).unwrap());
        let sp = Spectral::new(m.grid);
        let k = m.velocity.diffusion_matrix();
        let c = DensityField::constant(m.grid, 2.5);
        assert!(rosseland_rhs(&sp, &m.opacity, &k, &c)
            .unwrap()
            .values
            .iter()
            .all(|v| v.abs() < 1e-12));
        let rho = DensityField::from_fn(m.grid, |x| (2.0 * PI * x[0]).cos());
        let out = rosseland_rhs(&sp, &m.opacity, &k, &rho).unwrap();
        for (o, r) in out.values.iter().zip(&rho.values) {
            assert!((o + 4.0 * PI * PI * r).abs() < 1e-10);
        }
        let rat = Opacity::rational(1.0, 2.0).unwrap();
        let smooth = DensityField::from_fn(m.grid, |x| {
            1.0 + 0.4 * (2.0 * PI * x[0]).sin() + 0.3 * (4.0 * PI * x[0]).cos()
        });
        let out = rosseland_rhs(&sp, &rat, &k, &smooth).unwrap();
        assert!(m.grid.integrate(&out.values).abs() < 1e-10);
    }

    #[test]
    fn heat_oracle() {
        let m = gt2(64, Opacity::constant(1.0).unwrap());
        let cfg = SpdeConfig::new(1e-5, 0.1, 0.1).without_noise();
        let s = SpdeSolver::new(&m, None, cfg).unwrap();
        let rho0 = DensityField::from_fn(m.grid, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
        let tr = s.run(&rho0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let decay = (-4.0 * PI * PI * 0.1f64).exp();
        let err: Vec<f64> = m
            .grid
            .points()
            .zip(&tr.final_density().values)
            .map(|(x, r)| r - (1.0 + 0.5 * decay * (2.0 * PI * x[0]).cos()))
            .collect();
        assert!(m.grid.l2_norm(&err) <= 1e-4);
        for w in tr.mass.windows(2) {
            assert!((w[1] - tr.mass[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn stability_rule_enforced() {
        let m = gt2(32, Opacity::rational(1.0, 2.0).unwrap());
        let dt = max_stable_dt(&m) * 2.0;
        let cfg = SpdeConfig::new(dt, dt * 10.0, dt * 10.0).without_noise();
        assert!(SpdeSolver::new(&m, None, cfg)
            .unwrap_err()
            .to_string()
            .contains("stability"));
    }

    #[test]
    fn constant_state_is_steady() {
        let m = gt2(16, Opacity::rational(1.0, 2.0).unwrap());
        let cfg = SpdeConfig::new(1e-4, 0.01, 0.005).without_noise();
        let s = SpdeSolver::new(&m, None, cfg).unwrap();
        let c = DensityField::constant(m.grid, 1.7);
        let tr = s.run(&c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(tr
            .snapshots
            .iter()
            .all(|sn| sn.values.iter().all(|v| (v - 1.7).abs() < 1e-13)));
        let rk = s.run_rk4(&c).unwrap();
        assert!(rk.final_density().values.iter().all(|v| (v - 1.7).abs() < 1e-13));
    }

    #[test]
    fn rank_one_noise_uses_single_mode() {
        let m = gt2(16, Opacity::constant(1.0).unwrap());
        let prof: Vec<f64> = m.grid.points().map(|x| (2.0 * PI * x[0]).cos()).collect();
        let nm = NoiseModel::telegraph(m.grid, prof.clone(), 2.0).unwrap();
        let st = NoiseStatistics::new(&nm).unwrap();
        let cfg = SpdeConfig::new(1e-4, 1e-4, 1e-4).without_diffusion();
        let s = SpdeSolver::new(&m, Some(&st), cfg).unwrap();
        assert_eq!(s.n_modes(), 1);
        // one step: ρ₁ - ρ₀ - dt hρ₀ = √dt ρ₀ n₁ ξ /√λ for a single ξ
        let rho0 = DensityField::constant(m.grid, 1.0);
        let mut rho = rho0.clone();
        s.step(&mut rho, 0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let incr: Vec<f64> = rho
            .values
            .iter()
            .zip(st.drift_effective())
            .map(|(r, h)| (r - 1.0 - 1e-4 * h) / 1e-2)
            .collect();
        let i = 3;
        let xi = incr[i] * 2f64.sqrt() / prof[i];
        for (v, p) in incr.iter().zip(&prof) {
            assert!((v - p * xi / 2f64.sqrt()).abs() < 1e-12);
        }
    }

    // Stratonovich consistency: E log ρ_T(x) = log ρ₀(x) with the effective drift.
    #[test]
    fn log_moment_has_no_drift() {
        let m = gt2(8, Opacity::constant(1.0).unwrap());
        let prof: Vec<f64> = m.grid.points().map(|x| 0.8 * (2.0 * PI * x[0]).cos()).collect();
        let nm = NoiseModel::telegraph(m.grid, prof, 1.0).unwrap();
        let st = NoiseStatistics::new(&nm).unwrap();
        let cfg = SpdeConfig::new(1e-3, 0.5, 0.5).without_diffusion();
        let s = SpdeSolver::new(&m, Some(&st), cfg).unwrap();
        let rho0 = DensityField::constant(m.grid, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let logs: Vec<f64> = (0..4000)
            .map(|_| s.run(&rho0, &mut rng).unwrap().final_density().values[0].ln())
            .collect();
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (var / n).sqrt(), "{mean}");
    }
}
