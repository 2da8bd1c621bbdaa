//! Pass/fail table of algebraic identities on a configured experiment.

use nalgebra::{Matrix2, SymmetricEigen};
use rand::Rng;

use super::{sample_rng, Experiment};
use crate::correctors::{corrector1, corrector2_all, generator_eps, martingale_residual, TestFunction};
use crate::error::Result;
use crate::kinetic::KineticConfig;
use crate::model::{KineticField, Model};
use crate::noise::{NoiseModel, NoiseStatistics};

/// One identity: `passed` iff `residual <= tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub identity: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl VerifyRow {
    pub fn new(identity: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            identity: identity.into(),
            residual,
            tolerance,
            passed: residual <= tolerance,
        }
    }

    /// A row whose pass criterion is not `residual <= tolerance`.
    pub fn with_pass(identity: impl Into<String>, residual: f64, tolerance: f64, passed: bool) -> Self {
        Self {
            identity: identity.into(),
            residual,
            tolerance,
            passed,
        }
    }
}

/// Settings for the Monte Carlo rows.
#[derive(Debug, Clone)]
pub struct MartingaleCheck {
    pub config: KineticConfig,
    pub test: TestFunction,
    pub samples: usize,
    pub window: (f64, f64),
    pub seed: u64,
    pub residual_sigmas: f64,
    pub qv_sigmas: f64,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-12;
const RANDOM_FIELDS: usize = 100;

/// Positive random kinetic field for stream `index` of `seed`.
pub fn random_field(model: &Model, seed: u64, index: usize) -> KineticField {
    let mut rng = sample_rng(seed, index);
    let mut f = KineticField::zeros(model.grid, &model.velocity);
    for v in f.values_mut() {
        *v = rng.random_range(0.05..2.0);
    }
    f
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn max_over(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    (0..n).map(f).fold(0.0, f64::max)
}

pub fn structural_rows(model: &Model, seed: u64) -> Vec<VerifyRow> {
    let v = &model.velocity;
    let mut rows = vec![
        VerifyRow::new(
            "equilibrium_mass",
            (v.mass_of_equilibrium() - 1.0).abs(),
            IDENTITY_TOLERANCE,
        ),
        VerifyRow::new(
            "null_flux",
            v.null_flux().iter().fold(0.0, |a: f64, b| a.max(b.abs())),
            IDENTITY_TOLERANCE,
        ),
    ];
    let k = v.diffusion_matrix();
    let dim = model.grid.dim();
    let min_eig = if dim == 1 {
        k[0][0]
    } else {
        let m = Matrix2::new(k[0][0], k[0][1], k[1][0], k[1][1]);
        SymmetricEigen::new(m).eigenvalues.min()
    };
    rows.push(VerifyRow::new(
        "diffusion_spd",
        if min_eig > 0.0 { 0.0 } else { 1.0 - min_eig },
        0.0,
    ));

    let dissipation = max_over(RANDOM_FIELDS, |i| {
        let f = random_field(model, seed, i);
        let rho = model.density(&f);
        let lhs = model.weighted_inner(&model.relaxation_operator(&f), &f);
        let mut scaled = model.apply_l(&f);
        let sig: Vec<f64> = rho.values.iter().map(|&r| model.opacity.eval(r).sqrt()).collect();
        for k in 0..v.len() {
            scaled.node_mut(k).iter_mut().zip(&sig).for_each(|(a, s)| *a *= s);
        }
        rel(lhs, -model.weighted_inner(&scaled, &scaled))
    });
    rows.push(VerifyRow::new("dissipation", dissipation, IDENTITY_TOLERANCE));

    let semigroup = max_over(RANDOM_FIELDS, |i| {
        let f = random_field(model, seed, i);
        let (s, t) = (0.1 + 0.02 * i as f64, 0.7);
        let a = model.relax_exact(&model.relax_exact(&f, s), t);
        let b = model.relax_exact(&f, s + t);
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| rel(*x, *y))
            .fold(0.0, f64::max)
    });
    rows.push(VerifyRow::new("relaxation_semigroup", semigroup, IDENTITY_TOLERANCE));
    rows
}

/// Detects a two-state chain with opposite profiles and returns `(n₁, λ)`.
pub fn telegraph_parameters(noise: &NoiseModel) -> Option<(Vec<f64>, f64)> {
    if noise.n_states() != 2 {
        return None;
    }
    let m = noise.generator();
    let (a, b) = (noise.state(0), noise.state(1));
    let symmetric = (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-14 * m[(0, 1)].abs();
    let opposite = a.iter().zip(b).all(|(x, y)| (x + y).abs() <= 1e-14 * (1.0 + x.abs()));
    (symmetric && opposite).then(|| (a.to_vec(), m[(0, 1)]))
}

pub fn noise_rows(noise: &NoiseModel, stats: &NoiseStatistics) -> Vec<VerifyRow> {
    let solver = stats.poisson_solver();
    let ns = noise.n_states();
    let npts = noise.grid().len();
    let nu = noise.stationary();
    let poisson = max_over(npts, |x| {
        let psi: Vec<f64> = (0..ns).map(|i| stats.psi()[i][x]).collect();
        let mpsi = solver.apply_generator(&psi);
        let centered = (0..ns).map(|i| (mpsi[i] - noise.state(i)[x]).abs()).fold(0.0, f64::max);
        let mean = psi.iter().zip(nu).map(|(p, w)| p * w).sum::<f64>().abs();
        centered.max(mean)
    });
    let mut rows = vec![VerifyRow::new("poisson_residual", poisson, IDENTITY_TOLERANCE)];
    let drift = max_over(npts, |x| {
        let h = stats.drift_effective()[x];
        (h - 0.5 * stats.kernel(x, x))
            .abs()
            .max((h + stats.drift_paper()[x]).abs())
    });
    rows.push(VerifyRow::new("drift_half_diagonal", drift, IDENTITY_TOLERANCE));
    let lmax = stats.eigenvalues().first().copied().unwrap_or(0.0);
    let lmin = stats.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    rows.push(VerifyRow::new(
        "kernel_psd",
        (-lmin).max(0.0),
        1e-8 * lmax.max(f64::MIN_POSITIVE),
    ));

    if let Some((n1, rate)) = telegraph_parameters(noise) {
        let g = noise.grid();
        let psi = max_over(npts, |x| {
            (stats.psi()[0][x] + n1[x] / (2.0 * rate))
                .abs()
                .max((stats.psi()[1][x] - n1[x] / (2.0 * rate)).abs())
        });
        rows.push(VerifyRow::new("telegraph_psi", psi, IDENTITY_TOLERANCE));
        let kernel = max_over(npts, |x| {
            (0..npts)
                .map(|y| (stats.kernel(x, y) - n1[x] * n1[y] / rate).abs())
                .fold(0.0, f64::max)
        });
        rows.push(VerifyRow::new("telegraph_kernel", kernel, IDENTITY_TOLERANCE));
        let l1 = g.inner(&n1, &n1) / rate;
        rows.push(VerifyRow::new(
            "telegraph_eigenvalue",
            (lmax - l1).abs(),
            IDENTITY_TOLERANCE,
        ));
        let hp = max_over(npts, |x| (stats.drift_paper()[x] + n1[x] * n1[x] / (2.0 * rate)).abs());
        rows.push(VerifyRow::new("telegraph_drift", hp, IDENTITY_TOLERANCE));
    }
    rows
}

pub fn corrector_rows(
    model: &Model,
    noise: &NoiseModel,
    stats: &NoiseStatistics,
    tests: &[TestFunction],
    epsilon: f64,
    seed: u64,
) -> Result<Vec<VerifyRow>> {
    let ns = noise.n_states();
    let nu = noise.stationary();
    let solver = stats.poisson_solver();
    let (mut poisson, mut relax_term, mut poisson_term, mut split, mut invariance, mut phi2) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..RANDOM_FIELDS / 10 {
        let f = random_field(model, seed, i);
        let rho = model.density(&f);
        for &test in tests {
            let p = test.profile(model.grid);
            let phi1: Vec<f64> = (0..ns).map(|s| corrector1(model, stats, &f, s, test)).collect();
            let mphi1 = solver.apply_generator(&phi1);
            let src: Vec<f64> = (0..ns)
                .map(|s| {
                    let w: Vec<f64> = noise.state(s).iter().zip(&p).map(|(a, b)| a * b).collect();
                    -model.grid.inner(&rho.values, &w)
                })
                .collect();
            let mean: f64 = src.iter().zip(nu).map(|(a, b)| a * b).sum();
            for s in 0..ns {
                poisson = poisson.max(rel(mphi1[s], src[s] - mean));
                let t = generator_eps(model, noise, stats, &f, s, test, epsilon)?;
                relax_term = relax_term.max(t.singular_relaxation.abs());
                poisson_term = poisson_term.max(t.singular_poisson.abs());
                split = split.max(rel(t.non_transport(), t.limit_noise + t.order_eps));
            }
            let v0 = test.apply(model, &f);
            for t in [0.3, 3.0] {
                invariance = invariance.max(rel(test.apply(model, &model.relax_exact(&f, t)), v0));
            }
            if telegraph_parameters(noise).is_some() {
                let c2 = corrector2_all(model, noise, stats, &f, test)?;
                phi2 = phi2.max(c2.iter().fold(0.0, |a: f64, b| a.max(b.abs())));
            }
        }
    }
    let mut rows = vec![
        VerifyRow::new("corrector_poisson_identity", poisson, IDENTITY_TOLERANCE),
        VerifyRow::new("singular_relaxation_cancels", relax_term, IDENTITY_TOLERANCE),
        VerifyRow::new("singular_poisson_cancels", poisson_term, IDENTITY_TOLERANCE),
        VerifyRow::new("generator_limit_split", split, 10.0 * IDENTITY_TOLERANCE),
        VerifyRow::new("relaxation_invariance", invariance, IDENTITY_TOLERANCE),
    ];
    if telegraph_parameters(noise).is_some() {
        rows.push(VerifyRow::new("telegraph_phi2_zero", phi2, IDENTITY_TOLERANCE));
    }
    Ok(rows)
}

pub fn martingale_rows(exp: &Experiment, check: &MartingaleCheck) -> Result<Vec<VerifyRow>> {
    let (Some(noise), Some(stats)) = (&exp.noise, &exp.stats) else {
        return Ok(Vec::new());
    };
    let r = martingale_residual(
        &exp.model,
        noise,
        stats,
        &check.config,
        &exp.rho0,
        check.test,
        check.samples,
        check.window,
        check.seed,
    )?;
    Ok(vec![
        VerifyRow::new(
            "martingale_residual",
            r.residual_mean.abs(),
            check.residual_sigmas * r.residual_stderr,
        ),
        VerifyRow::new(
            "quadratic_variation",
            r.qv_defect_mean.abs(),
            check.qv_sigmas * r.qv_defect_stderr,
        ),
    ])
}

/// All deterministic rows, plus the Monte Carlo rows when `martingale` is
/// given and the experiment has noise.
pub fn verify(
    exp: &Experiment,
    epsilon: f64,
    seed: u64,
    martingale: Option<&MartingaleCheck>,
) -> Result<Vec<VerifyRow>> {
    let mut rows = structural_rows(&exp.model, seed);
    if let (Some(noise), Some(stats)) = (&exp.noise, &exp.stats) {
        rows.extend(noise_rows(noise, stats));
        rows.extend(corrector_rows(&exp.model, noise, stats, &exp.modes, epsilon, seed)?);
        if let Some(check) = martingale {
            rows.extend(martingale_rows(exp, check)?);
        }
    }
    Ok(rows)
}
