//! Perturbed test functions for the Fourier cylinder functions
//! `φ_j(f) = (f, p_j F) = ∫ ρ p_j`.
//!
//! Because `Dφ_j = p_j F` is constant, every corrector is again linear in
//! `ρ`: `φ^ε(f, n_i) = ∫ ρ W_i` with `W_i = p - ε ψ_i p + ε² s_i`, and the
//! generator `𝓛^ε φ^ε(·, n_i)` is a linear functional of `f`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinetic::{KineticConfig, KineticSolver};
use crate::model::{DensityField, KineticField, Model, TorusGrid};
use crate::noise::{NoiseModel, NoisePath, NoiseStatistics};
use crate::spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Cos,
    Sin,
}

/// `p(x) = √2 cos(2π ξ·x)` or `√2 sin(2π ξ·x)`; `ξ = 0` gives `p ≡ 1`.
/// Normalized so that `‖p F‖ = 1` in the weighted space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestFunction {
    pub mode: [i64; 2],
    pub parity: Parity,
}

impl TestFunction {
    pub fn cos(mode: [i64; 2]) -> Self {
        Self {
            mode,
            parity: Parity::Cos,
        }
    }

    pub fn sin(mode: [i64; 2]) -> Self {
        Self {
            mode,
            parity: Parity::Sin,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let [a, b] = self.mode;
        if a == 0 && b == 0 {
            return if self.parity == Parity::Cos { 1.0 } else { 0.0 };
        }
        let arg = 2.0 * PI * (a as f64 * x[0] + b as f64 * x[1]);
        let s = 2f64.sqrt();
        match self.parity {
            Parity::Cos => s * arg.cos(),
            Parity::Sin => s * arg.sin(),
        }
    }

    pub fn profile(&self, grid: TorusGrid) -> Vec<f64> {
        grid.points().map(|x| self.eval(x)).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        if self.mode == [0, 0] {
            1.0
        } else {
            2f64.sqrt()
        }
    }

    /// `φ_j(f) = ∫ ⟨f⟩ p`.
    pub fn apply(&self, model: &Model, f: &KineticField) -> f64 {
        self.apply_density(model.grid, &model.density(f))
    }

    pub fn apply_density(&self, grid: TorusGrid, rho: &DensityField) -> f64 {
        grid.points()
            .zip(&rho.values)
            .map(|(x, r)| r * self.eval(x))
            .sum::<f64>()
            * grid.cell_volume()
    }
}

/// `φ₁(f, n_i) = -∫ ρ ψ_i p`.
pub fn corrector1(model: &Model, stats: &NoiseStatistics, f: &KineticField, state: usize, test: TestFunction) -> f64 {
    let rho = model.density(f);
    let p = test.profile(model.grid);
    -weighted_integral(model.grid, &rho.values, &stats.psi()[state], &p)
}

/// Per-state values `q_i = -∫ ρ n_i ψ_i p` entering the second corrector.
pub fn corrector2_source(
    model: &Model,
    noise: &NoiseModel,
    stats: &NoiseStatistics,
    rho: &DensityField,
    test: TestFunction,
) -> Vec<f64> {
    let p = test.profile(model.grid);
    (0..noise.n_states())
        .map(|i| {
            let npsi: Vec<f64> = noise.state(i).iter().zip(&stats.psi()[i]).map(|(a, b)| a * b).collect();
            -weighted_integral(model.grid, &rho.values, &npsi, &p)
        })
        .collect()
}

/// `φ₂(f, ·) = -M⁻¹(q - ν·q)` for all states at once.
pub fn corrector2_all(
    model: &Model,
    noise: &NoiseModel,
    stats: &NoiseStatistics,
    f: &KineticField,
    test: TestFunction,
) -> Result<Vec<f64>> {
    let q = corrector2_source(model, noise, stats, &model.density(f), test);
    Ok(stats.poisson_solver().solve(&q)?.into_iter().map(|v| -v).collect())
}

pub fn corrector2(
    model: &Model,
    noise: &NoiseModel,
    stats: &NoiseStatistics,
    f: &KineticField,
    state: usize,
    test: TestFunction,
) -> Result<f64> {
    Ok(corrector2_all(model, noise, stats, f, test)?[state])
}

/// `𝓛φ(ρ) = (div(σ(ρ)⁻¹K∇ρ), p) - Σ_i ν_i (ρ n_i ψ_i, p)`.
pub fn limit_generator(model: &Model, stats: &NoiseStatistics, rho: &DensityField, test: TestFunction) -> Result<f64> {
    let sp = Spectral::new(model.grid);
    let p = test.profile(model.grid);
    let diff = crate::limit::rosseland_rhs(&sp, &model.opacity, &model.velocity.diffusion_matrix(), rho)?;
    let det = model.grid.inner(&diff.values, &p);
    let noise = -weighted_integral(model.grid, &rho.values, stats.drift_paper(), &p);
    Ok(det + noise)
}

fn weighted_integral(grid: TorusGrid, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    grid.cell_volume() * a.iter().zip(b).zip(c).map(|((a, b), c)| a * b * c).sum::<f64>()
}

/// Term-by-term evaluation of `𝓛^ε φ^ε(f, n_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneratorTerms {
    /// `-ε⁻¹ (Af, Dφ^ε)`, the whole transport contribution.
    pub transport: f64,
    /// `-ε⁻¹ (Af, Dφ)`.
    pub transport_phi: f64,
    /// `-(Af, Dφ₁)`.
    pub transport_phi1: f64,
    /// `-ε (Af, Dφ₂)`.
    pub transport_phi2: f64,
    /// `ε⁻² (σ(⟨f⟩)Lf, Dφ^ε)`.
    pub relaxation: f64,
    /// `ε⁻¹ (f n_i, Dφ^ε)`.
    pub noise: f64,
    /// `ε⁻² (M φ^ε)(f, n_i)`.
    pub jump: f64,
    /// Residual of `(σLf, Dφ) = 0`.
    pub singular_relaxation: f64,
    /// Residual of `(σLf, Dφ₁) + Mφ₁ + (fn, Dφ) = 0`.
    pub singular_poisson: f64,
    /// `-Σ ν_l (ρ n_l ψ_l, p)`, the noise part of the limit generator.
    pub limit_noise: f64,
    /// `ε (f n_i, Dφ₂)`.
    pub order_eps: f64,
    pub total: f64,
}

impl GeneratorTerms {
    /// Everything except transport: equals `limit_noise + order_eps` once
    /// the singular terms cancel.
    pub fn non_transport(&self) -> f64 {
        self.relaxation + self.noise + self.jump
    }
}

/// Precomputed `W_i`, `∇W_i` for one test function and one `ε`.
#[derive(Debug, Clone)]
pub struct CorrectorSet<'a> {
    model: &'a Model,
    noise: &'a NoiseModel,
    stats: &'a NoiseStatistics,
    test: TestFunction,
    epsilon: f64,
    p: Vec<f64>,
    /// `s_i = M⁻¹I(n ψ)_i p`, so that `φ₂(f, n_i) = ∫ ρ s_i`.
    s: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    grad_w: Vec<Vec<Vec<f64>>>,
}

impl<'a> CorrectorSet<'a> {
    pub fn new(
        model: &'a Model,
        noise: &'a NoiseModel,
        stats: &'a NoiseStatistics,
        test: TestFunction,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::OutOfRange(format!("epsilon must be positive, got {epsilon}")));
        }
        let grid = model.grid;
        let sp = Spectral::new(grid);
        let p = test.profile(grid);
        let npsi: Vec<Vec<f64>> = noise
            .states()
            .iter()
            .zip(stats.psi())
            .map(|(n, s)| n.iter().zip(s).map(|(a, b)| a * b).collect())
            .collect();
        let second = stats.poisson_solver().solve_profiles(&npsi)?;
        let s: Vec<Vec<f64>> = second
            .iter()
            .map(|v| v.iter().zip(&p).map(|(a, b)| a * b).collect())
            .collect();
        let w: Vec<Vec<f64>> = (0..noise.n_states())
            .map(|i| {
                (0..grid.len())
                    .map(|x| p[x] - epsilon * stats.psi()[i][x] * p[x] + epsilon * epsilon * s[i][x])
                    .collect()
            })
            .collect();
        let grad_w = w.iter().map(|wi| sp.gradient(wi)).collect();
        Ok(Self {
            model,
            noise,
            stats,
            test,
            epsilon,
            p,
            s,
            w,
            grad_w,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn test(&self) -> TestFunction {
        self.test
    }

    pub fn n_states(&self) -> usize {
        self.w.len()
    }

    /// `φ^ε(f, n_i)` for every state.
    pub fn phi_eps_all(&self, rho: &[f64]) -> Vec<f64> {
        let g = self.model.grid;
        self.w.iter().map(|w| g.inner(rho, w)).collect()
    }

    /// `φ₂(f, n_i) = ∫ ρ s_i`.
    pub fn phi2(&self, rho: &[f64], state: usize) -> f64 {
        self.model.grid.inner(rho, &self.s[state])
    }

    /// `𝓛^ε φ^ε(f, n_i)` for every state. The relaxation term is dropped:
    /// `⟨L f⟩ = 0` makes it vanish identically.
    pub fn generator_all(&self, f: &KineticField) -> Vec<f64> {
        let rho = self.model.density(f);
        let flux = self.model.flux(f);
        self.generator_from(&rho.values, &flux)
    }

    fn generator_from(&self, rho: &[f64], flux: &[Vec<f64>]) -> Vec<f64> {
        let g = self.model.grid;
        let eps = self.epsilon;
        let phi = self.phi_eps_all(rho);
        let m = self.noise.generator();
        (0..self.n_states())
            .map(|i| {
                let transport: f64 = flux
                    .iter()
                    .zip(&self.grad_w[i])
                    .map(|(j, dw)| g.inner(j, dw))
                    .sum::<f64>()
                    / eps;
                let noise = weighted_integral(g, rho, self.noise.state(i), &self.w[i]) / eps;
                let jump: f64 = (0..phi.len()).map(|l| m[(i, l)] * phi[l]).sum::<f64>() / (eps * eps);
                transport + noise + jump
            })
            .collect()
    }

    /// Quadratic-variation density `ε⁻² Σ_l M_il (φ^ε_l - φ^ε_i)²`.
    pub fn qv_rate_all(&self, rho: &[f64]) -> Vec<f64> {
        let phi = self.phi_eps_all(rho);
        let m = self.noise.generator();
        let e2 = self.epsilon * self.epsilon;
        (0..phi.len())
            .map(|i| {
                (0..phi.len())
                    .map(|l| m[(i, l)] * (phi[l] - phi[i]).powi(2))
                    .sum::<f64>()
                    / e2
            })
            .collect()
    }

    /// Full term breakdown at state `i`.
    pub fn generator_terms(&self, f: &KineticField, state: usize) -> GeneratorTerms {
        let model = self.model;
        let g = model.grid;
        let eps = self.epsilon;
        let rho = model.density(f);
        let flux = model.flux(f);
        let sp = Spectral::new(g);
        let psi = &self.stats.psi()[state];
        let n = self.noise.state(state);
        let m = self.noise.generator();

        // (Af, hF) = ∫ div J h = -∫ J·∇h
        let af = |h: &[f64]| -> f64 {
            let grad = sp.gradient(h);
            -flux.iter().zip(&grad).map(|(j, d)| g.inner(j, d)).sum::<f64>()
        };
        let psi_p: Vec<f64> = psi.iter().zip(&self.p).map(|(a, b)| a * b).collect();
        let transport_phi = -af(&self.p) / eps;
        let transport_phi1 = af(&psi_p);
        let transport_phi2 = -eps * af(&self.s[state]);
        let transport = -af(&self.w[state]) / eps;

        // (σLf, hF) = ∫ σ(ρ) ⟨Lf⟩ h
        let lf = model.density(&model.apply_l(f));
        let sig_lf: Vec<f64> = lf
            .values
            .iter()
            .zip(&rho.values)
            .map(|(l, r)| model.opacity.eval(*r) * l)
            .collect();
        let relax = |h: &[f64]| g.inner(&sig_lf, h);
        let relaxation = relax(&self.w[state]) / (eps * eps);

        let noise = weighted_integral(g, &rho.values, n, &self.w[state]) / eps;
        let phi = self.phi_eps_all(&rho.values);
        let jump: f64 = (0..phi.len()).map(|l| m[(state, l)] * phi[l]).sum::<f64>() / (eps * eps);

        let phi1: Vec<f64> = (0..phi.len())
            .map(|l| -weighted_integral(g, &rho.values, &self.stats.psi()[l], &self.p))
            .collect();
        let m_phi1: f64 = (0..phi1.len()).map(|l| m[(state, l)] * phi1[l]).sum();
        let singular_relaxation = relax(&self.p);
        let singular_poisson = -relax(&psi_p) + m_phi1 + weighted_integral(g, &rho.values, n, &self.p);

        let limit_noise = -weighted_integral(g, &rho.values, self.stats.drift_paper(), &self.p);
        let order_eps = eps * weighted_integral(g, &rho.values, n, &self.s[state]);

        GeneratorTerms {
            transport,
            transport_phi,
            transport_phi1,
            transport_phi2,
            relaxation,
            noise,
            jump,
            singular_relaxation,
            singular_poisson,
            limit_noise,
            order_eps,
            total: transport + relaxation + noise + jump,
        }
    }
}

/// `𝓛^ε φ^ε_j(f, n_i)` with its term breakdown.
pub fn generator_eps(
    model: &Model,
    noise: &NoiseModel,
    stats: &NoiseStatistics,
    f: &KineticField,
    state: usize,
    test: TestFunction,
    epsilon: f64,
) -> Result<GeneratorTerms> {
    Ok(CorrectorSet::new(model, noise, stats, test, epsilon)?.generator_terms(f, state))
}

/// Per-state occupation moments `∫ θ^k du`, `k = 0, 1, 2`, over `[a, b]`
/// with `θ = (u - a)/(b - a)`.
fn occupation_moments(path: &NoisePath, a: f64, b: f64, out: &mut [[f64; 3]]) {
    out.iter_mut().for_each(|m| *m = [0.0; 3]);
    let h = b - a;
    let jumps = path.jump_times();
    let states = path.states();
    let mut k = jumps.partition_point(|&s| s <= a).saturating_sub(1);
    let mut u0 = a;
    while u0 < b {
        let u1 = jumps.get(k + 1).copied().unwrap_or(f64::INFINITY).min(b);
        let (t0, t1) = ((u0 - a) / h, (u1 - a) / h);
        let m = &mut out[states[k]];
        m[0] += u1 - u0;
        m[1] += h * (t1 * t1 - t0 * t0) / 2.0;
        m[2] += h * (t1 * t1 * t1 - t0 * t0 * t0) / 3.0;
        u0 = u1;
        k += 1;
    }
}

/// Per-sample martingale quantities on `[s, t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleSample {
    /// `φ^ε(f_t, m_t) - φ^ε(f_s, m_s) - ∫_s^t 𝓛^ε φ^ε`.
    pub increment: f64,
    /// `∫_s^t` of the quadratic-variation density.
    pub quadratic_variation: f64,
    /// `Ψ(ρ_s)`.
    pub weight: f64,
}

/// Integrates one kinetic sample along `path` and returns the martingale
/// increment on `[s, t]`. Within a step `f` is interpolated linearly and the
/// noise state is integrated exactly.
pub fn martingale_sample(
    set: &CorrectorSet,
    solver: &KineticSolver,
    rho0: &DensityField,
    path: &NoisePath,
    s: f64,
    t: f64,
    psi: impl Fn(&DensityField) -> f64,
) -> Result<MartingaleSample> {
    let dt = solver.config().dt;
    let ks = (s / dt).round() as usize;
    let kt = (t / dt).round() as usize;
    let ns = set.n_states();
    let model = set.model;
    let mut prev_gen: Vec<f64> = Vec::new();
    let mut prev_phi: Vec<f64> = Vec::new();
    let mut integral = 0.0;
    let mut qv = 0.0;
    let mut phi_s = 0.0;
    let mut phi_t = 0.0;
    let mut weight = 0.0;
    let mut moments = vec![[0.0; 3]; ns];
    let m = set.noise.generator();
    let e2 = set.epsilon * set.epsilon;
    solver.run_with_path(rho0, path, |step, time, f| {
        if step < ks || step > kt {
            return;
        }
        let rho = model.density(f);
        let flux = model.flux(f);
        let gen = set.generator_from(&rho.values, &flux);
        let phi = set.phi_eps_all(&rho.values);
        let state = path.state_at(time.min(path.horizon() * (1.0 - 1e-15)));
        if step == ks {
            phi_s = phi[path.state_at(time)];
            weight = psi(&rho);
        } else {
            occupation_moments(path, time - dt, time, &mut moments);
            for i in 0..ns {
                let [m0, m1, m2] = moments[i];
                if m0 == 0.0 {
                    continue;
                }
                integral += m0 * prev_gen[i] + m1 * (gen[i] - prev_gen[i]);
                // Σ_l M_il (d_l(θ))², d = φ_l - φ_i linear in θ
                for l in 0..ns {
                    if l == i {
                        continue;
                    }
                    let d0 = prev_phi[l] - prev_phi[i];
                    let d1 = phi[l] - phi[i] - d0;
                    qv += m[(i, l)] * (d0 * d0 * m0 + 2.0 * d0 * d1 * m1 + d1 * d1 * m2) / e2;
                }
            }
        }
        if step == kt {
            phi_t = phi[state];
        }
        prev_gen = gen;
        prev_phi = phi;
    })?;
    Ok(MartingaleSample {
        increment: phi_t - phi_s - integral,
        quadratic_variation: qv,
        weight,
    })
}

/// Monte Carlo summary of the martingale problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleReport {
    pub samples: usize,
    /// Mean and standard error of `ΔM · Ψ(ρ_s)`.
    pub residual_mean: f64,
    pub residual_stderr: f64,
    /// Mean and standard error of `ΔM² - ∫ QV`.
    pub qv_defect_mean: f64,
    pub qv_defect_stderr: f64,
    /// Empirical `Var ΔM` and the mean predicted quadratic variation.
    pub increment_variance: f64,
    pub predicted_variance: f64,
}

/// Estimates `E[(φ^ε(f_t,m_t) - φ^ε(f_s,m_s) - ∫_s^t 𝓛^εφ^ε) Ψ(ρ_s)]` with
/// `Ψ = tanh(φ_j(ρ_s))`, and checks the quadratic variation through
/// `E[ΔM² - ∫ QV] = 0`.
#[allow(clippy::too_many_arguments)]
pub fn martingale_residual(
    model: &Model,
    noise: &NoiseModel,
    stats: &NoiseStatistics,
    config: &KineticConfig,
    rho0: &DensityField,
    test: TestFunction,
    n_samples: usize,
    times: (f64, f64),
    base_seed: u64,
) -> Result<MartingaleReport> {
    let (s, t) = times;
    if !(0.0 <= s && s < t && t <= config.horizon + 1e-12) {
        return Err(Error::OutOfRange(format!("need 0 <= s < t <= T, got s = {s}, t = {t}")));
    }
    if n_samples < 2 {
        return Err(Error::OutOfRange("need at least two samples".into()));
    }
    let set = CorrectorSet::new(model, noise, stats, test, config.epsilon)?;
    let solver = KineticSolver::new(model, Some(noise), config.clone())?;
    let grid = model.grid;
    let samples: Vec<MartingaleSample> = (0..n_samples)
        .into_par_iter()
        .map(|idx| {
            let mut rng = crate::harness::sample_rng(base_seed, idx);
            let path = solver.sample_path(&mut rng)?;
            martingale_sample(&set, &solver, rho0, &path, s, t, |rho| {
                test.apply_density(grid, rho).tanh()
            })
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let res: Vec<f64> = samples.iter().map(|m| m.increment * m.weight).collect();
    let z: Vec<f64> = samples
        .iter()
        .map(|m| m.increment * m.increment - m.quadratic_variation)
        .collect();
    let inc: Vec<f64> = samples.iter().map(|m| m.increment).collect();
    let qv: Vec<f64> = samples.iter().map(|m| m.quadratic_variation).collect();
    let (rm, rs) = mean_stderr(&res);
    let (zm, zs) = mean_stderr(&z);
    let (im, _) = mean_stderr(&inc);
    let ivar = inc.iter().map(|v| (v - im).powi(2)).sum::<f64>() / (n_samples as f64 - 1.0);
    Ok(MartingaleReport {
        samples: n_samples,
        residual_mean: rm,
        residual_stderr: rs,
        qv_defect_mean: zm,
        qv_defect_stderr: zs,
        increment_variance: ivar,
        predicted_variance: mean_stderr(&qv).0,
    })
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::model::{Opacity, VelocityQuadrature, VelocitySpec};
    use nalgebra::DMatrix;

    fn gt2(n: usize) -> Model {
        let g = TorusGrid::new(n, 1).unwrap();
        Model::new(
            g,
            VelocityQuadrature::build(VelocitySpec::Gt2, 1).unwrap(),
            Opacity::rational(1.0, 2.0).unwrap(),
        )
        .unwrap()
    }

    fn telegraph(m: &Model, rate: f64) -> (NoiseModel, Vec<f64>) {
        let prof: Vec<f64> = m.grid.points().map(|x| 0.7 * (2.0 * PI * x[0]).cos()).collect();
        (NoiseModel::telegraph(m.grid, prof.clone(), rate).unwrap(), prof)
    }

    fn three_state(m: &Model) -> NoiseModel {
        let gen = DMatrix::from_row_slice(3, 3, &[-2.0, 1.5, 0.5, 0.3, -1.0, 0.7, 1.0, 1.0, -2.0]);
        let profiles = (0..3)
            .map(|i| {
                m.grid
                    .points()
                    .map(|x| 0.5 * ((i + 1) as f64 * 2.0 * PI * x[0] + i as f64).sin() + 0.2 * i as f64)
                    .collect()
            })
            .collect();
        NoiseModel::centered(m.grid, profiles, gen).unwrap()
    }

    fn field(m: &Model) -> KineticField {
        KineticField::from_fn(m.grid, &m.velocity, |x, k| {
            1.0 + 0.3 * (2.0 * PI * x[0]).cos() + (k as f64 - 0.5) * 0.4 * (4.0 * PI * x[0]).sin()
        })
    }

    #[test]
    fn first_corrector_examples() {
        let m = gt2(32);
        let rate = 1.3;
        let (nm, prof) = telegraph(&m, rate);
        let st = NoiseStatistics::new(&nm).unwrap();
        let f = field(&m);
        let p = TestFunction::cos([1, 0]);
        let rho = m.density(&f);
        let base = weighted_integral(m.grid, &rho.values, &prof, &p.profile(m.grid)) / (2.0 * rate);
        assert!((corrector1(&m, &st, &f, 0, p) - base).abs() < 1e-14);
        assert!((corrector1(&m, &st, &f, 1, p) + base).abs() < 1e-14);
        let zero = KineticField::zeros(m.grid, &m.velocity);
        assert_eq!(corrector1(&m, &st, &zero, 0, p), 0.0);
        let flat = m.equilibrium_field(&DensityField::constant(m.grid, 2.0));
        assert!(corrector1(&m, &st, &flat, 0, TestFunction::cos([3, 0])).abs() < 1e-14);
    }

    #[test]
    fn second_corrector_examples() {
        let m = gt2(32);
        let (nm, _) = telegraph(&m, 0.8);
        let st = NoiseStatistics::new(&nm).unwrap();
        let f = field(&m);
        let p = TestFunction::sin([1, 0]);
        assert!(corrector2_all(&m, &nm, &st, &f, p)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-14));
        let zero = KineticField::zeros(m.grid, &m.velocity);
        let nm3 = three_state(&m);
        let st3 = NoiseStatistics::new(&nm3).unwrap();
        assert!(corrector2_all(&m, &nm3, &st3, &zero, p)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        // M φ₂ = -(q - ν·q), ν·φ₂ = 0
        let phi2 = corrector2_all(&m, &nm3, &st3, &f, p).unwrap();
        let q = corrector2_source(&m, &nm3, &st3, &m.density(&f), p);
        let qbar: f64 = q.iter().zip(nm3.stationary()).map(|(a, b)| a * b).sum();
        let mphi = st3.poisson_solver().apply_generator(&phi2);
        for i in 0..3 {
            assert!((mphi[i] + q[i] - qbar).abs() < 1e-12);
        }
        let set = CorrectorSet::new(&m, &nm3, &st3, p, 0.1).unwrap();
        let rho = m.density(&f);
        for i in 0..3 {
            assert!((set.phi2(&rho.values, i) - phi2[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn poisson_identity_and_singular_terms() {
        let m = gt2(32);
        let nm = three_state(&m);
        let st = NoiseStatistics::new(&nm).unwrap();
        let f = field(&m);
        for test in [TestFunction::cos([1, 0]), TestFunction::sin([2, 0])] {
            let phi1: Vec<f64> = (0..3).map(|i| corrector1(&m, &st, &f, i, test)).collect();
            let mphi1 = st.poisson_solver().apply_generator(&phi1);
            let rho = m.density(&f);
            let p = test.profile(m.grid);
            let src: Vec<f64> = (0..3)
                .map(|i| -weighted_integral(m.grid, &rho.values, nm.state(i), &p))
                .collect();
            let mean: f64 = src.iter().zip(nm.stationary()).map(|(a, b)| a * b).sum();
            for i in 0..3 {
                assert!((mphi1[i] - (src[i] - mean)).abs() < 1e-12);
                let terms = generator_eps(&m, &nm, &st, &f, i, test, 0.1).unwrap();
                assert!(terms.singular_relaxation.abs() < 1e-12);
                assert!(terms.singular_poisson.abs() < 1e-12);
                assert!((terms.non_transport() - terms.limit_noise - terms.order_eps).abs() < 1e-11);
                let parts = terms.transport_phi + terms.transport_phi1 + terms.transport_phi2;
                assert!((terms.transport - parts).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn relaxed_test_function_is_time_independent() {
        let m = gt2(16);
        let f = field(&m);
        let p = TestFunction::cos([1, 0]);
        let v0 = p.apply(&m, &f);
        for t in [0.3, 3.0] {
            assert!((p.apply(&m, &m.relax_exact(&f, t)) - v0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_fields_have_no_transport() {
        let m = gt2(16);
        let nm = three_state(&m);
        let st = NoiseStatistics::new(&nm).unwrap();
        let f = KineticField::from_fn(m.grid, &m.velocity, |_, k| 1.0 + k as f64);
        let terms = generator_eps(&m, &nm, &st, &f, 1, TestFunction::cos([1, 0]), 0.2).unwrap();
        assert!(terms.transport.abs() < 1e-13);
    }

    #[test]
    fn generator_gap_is_linear_in_epsilon() {
        let m = gt2(32);
        let nm = three_state(&m);
        let st = NoiseStatistics::new(&nm).unwrap();
        let f = field(&m);
        let p = TestFunction::cos([1, 0]);
        let rho = m.density(&f);
        let lim = limit_generator(&m, &st, &rho, p).unwrap();
        let sp = Spectral::new(m.grid);
        let det = m.grid.inner(
            &crate::limit::rosseland_rhs(&sp, &m.opacity, &m.velocity.diffusion_matrix(), &rho)
                .unwrap()
                .values,
            &p.profile(m.grid),
        );
        let gap = |eps: f64| {
            let t = generator_eps(&m, &nm, &st, &f, 0, p, eps).unwrap();
            (t.non_transport() - (lim - det)).abs()
        };
        let (a, b, c) = (gap(0.1), gap(0.05), gap(0.025));
        for r in [a / b, b / c] {
            assert!(r > 2.0 / 3.0 && r < 2.0 * 3.0, "ratio {r}");
        }
    }

    #[test]
    fn limit_generator_examples() {
        let m = gt2(32);
        let (nm, _) = telegraph(&m, 1.0);
        let st = NoiseStatistics::new(&nm).unwrap();
        let p = TestFunction::cos([1, 0]);
        let c = DensityField::constant(m.grid, 1.5);
        let expect: f64 = 1.5 * m.grid.inner(st.drift_effective(), &p.profile(m.grid));
        assert!((limit_generator(&m, &st, &c, p).unwrap() - expect).abs() < 1e-13);
        assert_eq!(
            limit_generator(&m, &st, &DensityField::constant(m.grid, 0.0), p).unwrap(),
            0.0
        );

        let unit = Model::new(m.grid, m.velocity.clone(), Opacity::constant(1.0).unwrap()).unwrap();
        let zero_noise = NoiseModel::telegraph(m.grid, vec![0.0; 32], 1.0).unwrap();
        let st0 = NoiseStatistics::new(&zero_noise).unwrap();
        let q = TestFunction::sin([2, 0]);
        let rho = DensityField::new(q.profile(m.grid));
        let v = limit_generator(&unit, &st0, &rho, q).unwrap();
        assert!((v + 4.0 * PI * PI * 4.0 * q.apply_density(m.grid, &rho)).abs() < 1e-9);
    }

    #[test]
    fn corrector_bounds() {
        let m = gt2(32);
        let nm = three_state(&m);
        let st = NoiseStatistics::new(&nm).unwrap();
        for k in 0..20 {
            let amp = 0.5 * k as f64;
            let f = KineticField::from_fn(m.grid, &m.velocity, |x, v| {
                amp * ((k + v) as f64 * x[0] * 7.0).sin() + 0.1 * amp
            });
            let norm = m.weighted_norm(&f);
            for test in [TestFunction::cos([1, 0]), TestFunction::sin([3, 0])] {
                let bound = st.c_star() * test.sup_norm() * (1.0 + norm).powi(2);
                let phi2 = corrector2_all(&m, &nm, &st, &f, test).unwrap();
                for i in 0..3 {
                    assert!(corrector1(&m, &st, &f, i, test).abs() <= bound);
                    assert!(phi2[i].abs() <= bound);
                }
            }
        }
    }

    #[test]
    fn martingale_is_exact_without_transport_and_noise() {
        let g = TorusGrid::new(8, 1).unwrap();
        let m = Model::new(
            g,
            VelocityQuadrature::build(VelocitySpec::Gt2, 1).unwrap(),
            Opacity::rational(1.0, 2.0).unwrap(),
        )
        .unwrap();
        let nm = NoiseModel::telegraph(g, vec![0.0; 8], 1.0).unwrap();
        let st = NoiseStatistics::new(&nm).unwrap();
        let cfg = KineticConfig::new(0.5, 0.01, 0.2, 0.2).unwrap();
        let rho0 = DensityField::constant(g, 1.3);
        let r = martingale_residual(&m, &nm, &st, &cfg, &rho0, TestFunction::cos([0, 0]), 8, (0.05, 0.2), 3).unwrap();
        assert!(r.residual_mean.abs() < 1e-12 && r.residual_stderr < 1e-12);
    }

    #[test]
    fn occupation_moments_integrate_theta() {
        let p = NoisePath::from_jumps(1.0, 2.0, vec![0.0, 0.5], vec![0, 1]).unwrap();
        let mut out = vec![[0.0; 3]; 2];
        occupation_moments(&p, 0.0, 1.0, &mut out);
        assert!((out[0][0] - 0.5).abs() < 1e-15 && (out[0][1] - 0.125).abs() < 1e-15);
        assert!((out[1][2] - 7.0 / 24.0).abs() < 1e-15);
    }
}
