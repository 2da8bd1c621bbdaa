//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use rosseland::cli::{dispatch, Cli, Command};
use rosseland::config::{parse_config, RunConfig};
use rosseland::correctors::TestFunction;
use rosseland::harness::verify::{corrector_rows, martingale_rows, noise_rows, structural_rows, MartingaleCheck};
use rosseland::harness::{deterministic_convergence, epsilon_sweep_drifts, sample_rng, SweepThresholds, VerifyRow};
use rosseland::kinetic::{KineticConfig, KineticSolver};
use rosseland::limit::{Drift, SpdeConfig, SpdeSolver};
use rosseland::model::{DensityField, KineticField, Model, Opacity, TorusGrid, VelocityQuadrature, VelocitySpec};
use rosseland::noise::{NoiseModel, NoiseStatistics, PoissonSolver};

struct Outcome {
    detail: String,
    failures: Vec<String>,
}

impl Outcome {
    fn from_rows(rows: &[VerifyRow]) -> Self {
        let failures = rows
            .iter()
            .filter(|r| !r.passed)
            .map(|r| format!("{} residual {:.3e} vs {:.3e}", r.identity, r.residual, r.tolerance))
            .collect();
        let passed = rows.iter().filter(|r| r.passed).count();
        Self {
            detail: format!("{passed}/{} checks", rows.len()),
            failures,
        }
    }

    fn with_runtime(mut self, elapsed: Duration, limit: Duration) -> Self {
        if elapsed > limit {
            self.failures.push(format!("runtime {elapsed:.2?} exceeds {limit:?}"));
        }
        self.detail = format!("{}, {elapsed:.2?}", self.detail);
        self
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> RunConfig {
    parse_config(configs().join(name)).expect("shipped config parses")
}

fn model(spec: VelocitySpec, n: usize, dim: usize, opacity: Opacity) -> Model {
    let g = TorusGrid::new(n, dim).unwrap();
    Model::new(g, VelocityQuadrature::build(spec, dim).unwrap(), opacity).unwrap()
}

fn telegraph(m: &Model, amp: f64, rate: f64) -> NoiseModel {
    let prof = m.grid.points().map(|x| amp * (2.0 * PI * x[0]).cos()).collect();
    NoiseModel::telegraph(m.grid, prof, rate).unwrap()
}

fn random_chain(m: &Model, states: usize, seed: u64) -> NoiseModel {
    let mut rng = sample_rng(seed, states);
    let mut gen = DMatrix::zeros(states, states);
    for i in 0..states {
        for j in 0..states {
            if i != j {
                gen[(i, j)] = rng.random_range(0.1..2.0);
            }
        }
        gen[(i, i)] = -gen.row(i).sum();
    }
    let profiles = (0..states)
        .map(|_| {
            let (a, b, k) = (
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(1..4) as f64,
            );
            m.grid
                .points()
                .map(|x| a * (2.0 * PI * k * x[0]).cos() + b * (2.0 * PI * x[0]).sin())
                .collect()
        })
        .collect();
    NoiseModel::centered(m.grid, profiles, gen).unwrap()
}

fn structural() -> Outcome {
    let mut rows = Vec::new();
    let mut slowest = Duration::ZERO;
    for spec in [VelocitySpec::Gt2, VelocitySpec::Cont { nodes: 8 }] {
        for dim in [1, 2] {
            let t0 = Instant::now();
            let m = model(spec, 16, dim, Opacity::rational(1.0, 2.0).unwrap());
            rows.extend(structural_rows(&m, 11));
            slowest = slowest.max(t0.elapsed());
        }
    }
    Outcome::from_rows(&rows).with_runtime(slowest, Duration::from_secs(1))
}

fn noise_algebra() -> Outcome {
    let t0 = Instant::now();
    let m = model(VelocitySpec::Gt2, 32, 1, Opacity::constant(1.0).unwrap());
    let tg = telegraph(&m, 0.8, 1.7);
    let mut rows = noise_rows(&tg, &NoiseStatistics::new(&tg).unwrap());
    for (k, states) in [3, 4, 5, 3, 4, 5].into_iter().enumerate() {
        let chain = random_chain(&m, states, 100 + k as u64);
        rows.extend(noise_rows(&chain, &NoiseStatistics::new(&chain).unwrap()));
        let solver = PoissonSolver::new(chain.generator(), chain.stationary()).unwrap();
        let mut rng = sample_rng(7, k);
        let g: Vec<f64> = (0..states).map(|_| rng.random_range(-1.0..1.0)).collect();
        let psi = solver.solve(&g).unwrap();
        let mpsi = solver.apply_generator(&psi);
        let mean: f64 = g.iter().zip(chain.stationary()).map(|(a, b)| a * b).sum();
        let res = (0..states).map(|i| (mpsi[i] - (g[i] - mean)).abs()).fold(0.0, f64::max);
        rows.push(VerifyRow::new(format!("random_chain_poisson_{states}"), res, 1e-12));
    }
    Outcome::from_rows(&rows).with_runtime(t0.elapsed(), Duration::from_secs(1))
}

fn solver_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rows = Vec::new();

    let m = model(VelocitySpec::Gt2, 32, 1, Opacity::constant(1.0).unwrap());
    let s = KineticSolver::new(&m, None, KineticConfig::new(0.5, 0.01, 0.1, 0.1).unwrap()).unwrap();
    let mut f = KineticField::from_fn(m.grid, &m.velocity, |x, _| {
        (2.0 * PI * x[0]).cos() + 0.3 * (6.0 * PI * x[0]).sin()
    });
    let shift = 0.37;
    s.transport_step(&mut f, shift);
    let mut err: f64 = 0.0;
    for (i, x) in m.grid.points().enumerate() {
        for (k, a) in m.velocity.speeds().iter().enumerate() {
            let y = x[0] - a[0] * shift;
            let exact = (2.0 * PI * y).cos() + 0.3 * (6.0 * PI * y).sin();
            err = err.max((f.get(i, k) - exact).abs());
        }
    }
    rows.push(VerifyRow::new("spectral_transport", err, 1e-12));

    let heat = model(VelocitySpec::Gt2, 64, 1, Opacity::constant(1.0).unwrap());
    let solver = SpdeSolver::new(&heat, None, SpdeConfig::new(1e-5, 0.1, 0.1).without_noise()).unwrap();
    let rho0 = DensityField::from_fn(heat.grid, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
    let tr = solver.run(&rho0, &mut sample_rng(0, 0)).unwrap();
    let decay = (-4.0 * PI * PI * 0.1f64).exp();
    let e: Vec<f64> = heat
        .grid
        .points()
        .zip(&tr.final_density().values)
        .map(|(x, r)| r - (1.0 + 0.5 * decay * (2.0 * PI * x[0]).cos()))
        .collect();
    rows.push(VerifyRow::new("heat_l2_error", heat.grid.l2_norm(&e), 1e-4));

    let m = model(VelocitySpec::Gt2, 32, 1, Opacity::rational(1.0, 2.0).unwrap());
    let rho0 = DensityField::from_fn(m.grid, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
    let run = |dt: f64| {
        let s = KineticSolver::new(&m, None, KineticConfig::new(0.5, dt, 0.2, 0.2).unwrap()).unwrap();
        s.run(&rho0, &mut sample_rng(0, 0)).unwrap().final_density().clone()
    };
    let (a, b, c) = (run(0.02), run(0.01), run(0.005));
    let diff = |u: &DensityField, v: &DensityField| {
        let d: Vec<f64> = u.values.iter().zip(&v.values).map(|(x, y)| x - y).collect();
        m.grid.l2_norm(&d)
    };
    let ratio = diff(&a, &b) / diff(&b, &c);
    rows.push(VerifyRow::with_pass(
        "strang_halving_ratio",
        ratio,
        4.0,
        (4.0 / 1.5..=4.0 * 1.5).contains(&ratio),
    ));
    Outcome::from_rows(&rows).with_runtime(t0.elapsed(), Duration::from_secs(30))
}

fn rosseland_rates() -> Outcome {
    let t0 = Instant::now();
    let c = config("gt2_rosseland.toml");
    let exp = c.experiment().unwrap();
    let r = deterministic_convergence(&exp, &c.simulation.epsilons, c.simulation.reference_dt.unwrap()).unwrap();
    let mut o = Outcome::from_rows(&r.checks(c.harness.min_slope, c.harness.reference_tolerance));
    o.detail = format!("slope {:.3}, errors {:.3?}; {}", r.slope, r.errors, o.detail);
    o.with_runtime(t0.elapsed(), Duration::from_secs(300))
}

fn corrector_algebra() -> Outcome {
    let t0 = Instant::now();
    let m = model(VelocitySpec::Gt2, 32, 1, Opacity::rational(1.0, 2.0).unwrap());
    let tests = [TestFunction::cos([1, 0]), TestFunction::sin([2, 0])];
    let mut rows = Vec::new();
    for noise in [telegraph(&m, 0.7, 1.3), random_chain(&m, 3, 5), random_chain(&m, 4, 6)] {
        let st = NoiseStatistics::new(&noise).unwrap();
        rows.extend(corrector_rows(&m, &noise, &st, &tests, 0.1, 3).unwrap());
    }
    if !rows.iter().any(|r| r.identity == "telegraph_phi2_zero") {
        rows.push(VerifyRow::with_pass("telegraph_phi2_zero", f64::NAN, 1e-12, false));
    }
    Outcome::from_rows(&rows).with_runtime(t0.elapsed(), Duration::from_secs(10))
}

fn martingale_problem() -> Outcome {
    let t0 = Instant::now();
    let c = config("gt2_telegraph.toml");
    let exp = c.experiment().unwrap();
    let h = &c.harness;
    let check = MartingaleCheck {
        config: c.kinetic_config(c.simulation.epsilon).unwrap(),
        test: exp.modes[0],
        samples: h.martingale_samples,
        window: (h.martingale_start, h.martingale_end),
        seed: h.seed,
        residual_sigmas: h.residual_sigmas,
        qv_sigmas: h.qv_sigmas,
    };
    let rows = martingale_rows(&exp, &check).unwrap();
    let mut o = Outcome::from_rows(&rows);
    if h.martingale_samples < 10_000 || c.simulation.epsilon != 0.25 {
        o.failures
            .push("fixture must use epsilon = 0.25 and 10^4 samples".into());
    }
    o.with_runtime(t0.elapsed(), Duration::from_secs(600))
}

fn stochastic_limit() -> (Outcome, Outcome) {
    let t0 = Instant::now();
    let c = config("cont_sweep.toml");
    let exp = c.experiment().unwrap();
    let h = &c.harness;
    let reports = epsilon_sweep_drifts(
        &exp,
        &c.simulation.epsilons,
        h.kinetic_samples,
        h.limit_samples,
        &[Drift::Effective, Drift::Paper],
        h.seed,
    )
    .unwrap();
    let th = SweepThresholds {
        gap_slack: h.gap_slack,
        band_ratio: h.band_ratio,
        paper_separation: h.paper_separation,
    };
    let checks = reports[0].checks(&th, Some(&reports[1]), true);
    let (bounds, gaps): (Vec<VerifyRow>, Vec<VerifyRow>) =
        checks.into_iter().partition(|r| r.identity.starts_with("bound_"));
    let elapsed = t0.elapsed();
    let mut gap = Outcome::from_rows(&gaps);
    if c.simulation.epsilons != [0.5, 0.25, 0.125] || h.kinetic_samples < 500 || h.limit_samples < 2000 {
        gap.failures
            .push("fixture must sweep 0.5, 0.25, 0.125 with >= 500 / 2000 samples".into());
    }
    let gaps_at = |eps: f64| -> Vec<String> {
        reports[0]
            .rows
            .iter()
            .filter(|r| r.epsilon == eps)
            .map(|r| format!("{}={:.2e}", r.functional, r.gap))
            .collect()
    };
    gap.detail = format!("gaps at 0.125 [{}]; {}", gaps_at(0.125).join(" "), gap.detail);
    let gap = gap.with_runtime(elapsed, Duration::from_secs(3600));
    (gap, Outcome::from_rows(&bounds))
}

fn reproducibility() -> Outcome {
    let t0 = Instant::now();
    let mut failures = Vec::new();
    let mut files = 0;
    let runs = [
        (Command::RunKinetic, "gt2_telegraph.toml", Some(3)),
        (Command::RunSpde, "gt2_telegraph.toml", Some(3)),
        (Command::Sweep, "cont_sweep.toml", Some(40)),
        (
            Command::Verify { no_martingale: false },
            "gt2_telegraph.toml",
            Some(200),
        ),
    ];
    for (command, name, samples) in runs {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let cli = Cli {
                command,
                config: configs().join(name),
                out: Some(d.path().to_path_buf()),
                seed: None,
                samples,
                drift: None,
            };
            dispatch(&cli).unwrap();
        }
        let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for n in names {
            files += 1;
            let a = std::fs::read(dirs[0].path().join(&n)).unwrap();
            let b = std::fs::read(dirs[1].path().join(&n)).unwrap_or_default();
            if a != b {
                failures.push(format!("{} differs", n.to_string_lossy()));
            }
        }
    }
    Outcome {
        detail: format!("{files} files compared"),
        failures,
    }
    .with_runtime(t0.elapsed(), Duration::from_secs(600))
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut report = |id: u32, name: &str, o: Outcome| {
        let ok = o.failures.is_empty();
        all_pass &= ok;
        println!("{} {id} {name}: {}", if ok { "PASS" } else { "FAIL" }, o.detail);
        for f in &o.failures {
            println!("    {f}");
        }
    };
    report(1, "structural identities", structural());
    report(2, "noise algebra", noise_algebra());
    report(3, "solver oracles", solver_oracles());
    report(4, "deterministic Rosseland limit", rosseland_rates());
    report(5, "corrector algebra", corrector_algebra());
    report(6, "martingale problem", martingale_problem());
    let (gaps, bounds) = stochastic_limit();
    report(7, "stochastic diffusion limit", gaps);
    report(8, "uniform-bound diagnostics", bounds);
    report(9, "reproducibility", reproducibility());
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
