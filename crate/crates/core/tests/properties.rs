#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rosseland::config::RunConfig;
use rosseland::correctors::{corrector1, corrector2_all, CorrectorSet, TestFunction};
use rosseland::kinetic::{KineticConfig, KineticSolver};
use rosseland::limit::{max_stable_dt, SpdeConfig, SpdeSolver};
use rosseland::model::{DensityField, KineticField, Model, Opacity, TorusGrid, VelocityQuadrature, VelocitySpec};
use rosseland::noise::{NoiseModel, NoiseStatistics};

fn model(nx: usize, dim: usize, spec: VelocitySpec) -> Model {
    let grid = TorusGrid::new(nx, dim).unwrap();
    let v = VelocityQuadrature::build(spec, dim).unwrap();
    Model::new(grid, v, Opacity::rational(1.0, 2.0).unwrap()).unwrap()
}

fn chain(grid: TorusGrid, rates: &[f64], amps: &[(f64, i64)]) -> NoiseModel {
    let s = amps.len();
    let mut m = DMatrix::zeros(s, s);
    let mut r = rates.iter().cycle();
    for i in 0..s {
        for j in 0..s {
            if i != j {
                m[(i, j)] = *r.next().unwrap();
            }
        }
        m[(i, i)] = -(0..s).filter(|&j| j != i).map(|j| m[(i, j)]).sum::<f64>();
    }
    let states = amps
        .iter()
        .map(|&(a, k)| {
            grid.points()
                .map(|x| a * (2.0 * PI * k as f64 * x[0] + a).cos())
                .collect()
        })
        .collect();
    NoiseModel::centered(grid, states, m).unwrap()
}

fn chain_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<(f64, i64)>)> {
    (3usize..=5).prop_flat_map(|s| {
        (
            prop::collection::vec(0.2f64..3.0, s * (s - 1)),
            prop::collection::vec((0.1f64..1.5, 1i64..4), s),
        )
    })
}

fn spec_strategy() -> impl Strategy<Value = VelocitySpec> {
    prop_oneof![
        Just(VelocitySpec::Gt2),
        (2usize..12).prop_map(|nodes| VelocitySpec::Cont { nodes })
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn velocity_models_are_normalized(spec in spec_strategy(), dim in 1usize..=2) {
        let v = VelocityQuadrature::build(spec, dim).unwrap();
        prop_assert!((v.mass_of_equilibrium() - 1.0).abs() <= 1e-13);
        let flux = v.null_flux();
        prop_assert!(flux[0].abs() <= 1e-13 && flux[1].abs() <= 1e-13);
        let k = v.diffusion_matrix();
        prop_assert!((k[0][1] - k[1][0]).abs() == 0.0);
        prop_assert!(k[0][0] > 0.0);
        if dim == 2 {
            prop_assert!(k[0][0] * k[1][1] - k[0][1] * k[1][0] > 0.0);
        }
    }

    #[test]
    fn poisson_solution_is_centered_and_exact((rates, amps) in chain_strategy()) {
        let grid = TorusGrid::new(16, 1).unwrap();
        let noise = chain(grid, &rates, &amps);
        let st = NoiseStatistics::new(&noise).unwrap();
        let solver = st.poisson_solver();
        let scale = noise.states().iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        for x in 0..grid.len() {
            let psi: Vec<f64> = (0..noise.n_states()).map(|i| st.psi()[i][x]).collect();
            let mpsi = solver.apply_generator(&psi);
            for i in 0..noise.n_states() {
                prop_assert!((mpsi[i] - noise.state(i)[x]).abs() <= 1e-12 * scale);
            }
            let mean: f64 = psi.iter().zip(noise.stationary()).map(|(p, w)| p * w).sum();
            prop_assert!(mean.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn drift_is_half_the_kernel_diagonal((rates, amps) in chain_strategy()) {
        let grid = TorusGrid::new(16, 1).unwrap();
        let st = NoiseStatistics::new(&chain(grid, &rates, &amps)).unwrap();
        for x in 0..grid.len() {
            let h = st.drift_effective()[x];
            prop_assert!((h - 0.5 * st.kernel(x, x)).abs() <= 1e-12 * (1.0 + h.abs()));
            prop_assert!((h + st.drift_paper()[x]).abs() <= 1e-12 * (1.0 + h.abs()));
            prop_assert!(st.kernel(x, x) >= -1e-12);
        }
    }

    #[test]
    fn spectrum_reconstructs_the_kernel((rates, amps) in chain_strategy()) {
        let grid = TorusGrid::new(16, 1).unwrap();
        let st = NoiseStatistics::new(&chain(grid, &rates, &amps)).unwrap();
        let k = st.kernel_matrix();
        let scale = k.amax().max(1e-300);
        let mut rebuilt = DMatrix::<f64>::zeros(grid.len(), grid.len());
        for (&lambda, e) in st.eigenvalues().iter().zip(st.eigenfunctions()) {
            for x in 0..grid.len() {
                for y in 0..grid.len() {
                    rebuilt[(x, y)] += lambda * e[x] * e[y];
                }
            }
        }
        prop_assert!((rebuilt - k).amax() <= 1e-8 * scale);
    }

    #[test]
    fn noise_off_kinetic_conserves_mass_and_dissipates(
        a in 0.0f64..0.9,
        mode in 1i64..4,
        eps in prop::sample::select(vec![0.5f64, 0.25, 0.125]),
        spec in spec_strategy(),
    ) {
        let m = model(16, 1, spec);
        let rho0 = DensityField::from_fn(m.grid, |x| 1.0 + a * (2.0 * PI * mode as f64 * x[0]).sin());
        let dt = (eps * eps * eps).min(0.5 * eps * eps);
        let cfg = KineticConfig::new(eps, rosseland::kinetic::fit_dt(dt, 0.05), 0.1, 0.05).unwrap();
        let solver = KineticSolver::new(&m, None, cfg).unwrap();
        let traj = solver.run(&rho0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let m0 = traj.diagnostics[0].mass;
        for w in traj.diagnostics.windows(2) {
            prop_assert!((w[1].mass - m0).abs() <= 1e-12 * m0);
            prop_assert!(w[1].energy <= w[0].energy * (1.0 + 1e-12));
        }
    }

    #[test]
    fn deterministic_limit_conserves_mass_and_positivity(a in 0.0f64..0.5, b in 0.0f64..0.5, mode in 1i64..4) {
        let m = model(16, 1, VelocitySpec::Gt2);
        let rho0 = DensityField::from_fn(m.grid, |x| {
            1.0 + a * (2.0 * PI * mode as f64 * x[0]).cos() + b * (2.0 * PI * x[0]).sin()
        });
        let dt = rosseland::kinetic::fit_dt(max_stable_dt(&m), 0.05);
        let s = SpdeSolver::new(&m, None, SpdeConfig::new(dt, 0.1, 0.05).without_noise()).unwrap();
        let traj = s.run_rk4(&rho0).unwrap();
        let m0 = traj.mass[0];
        prop_assert!(traj.mass.iter().all(|&v| (v - m0).abs() <= 1e-12 * m0));
        prop_assert!(traj.min_density >= rho0.min() - 1e-12);
    }

    #[test]
    fn correctors_are_bounded_and_centered(
        (rates, amps) in chain_strategy(),
        amp in 0.0f64..3.0,
        shift in 0.0f64..1.0,
    ) {
        let m = model(16, 1, VelocitySpec::Cont { nodes: 4 });
        let noise = chain(m.grid, &rates, &amps);
        let st = NoiseStatistics::new(&noise).unwrap();
        let f = KineticField::from_fn(m.grid, &m.velocity, |x, v| {
            0.5 + amp * ((v + 1) as f64 * (x[0] + shift) * 2.0 * PI).sin().powi(2)
        });
        let test = TestFunction::cos([1, 0]);
        let norm = m.weighted_norm(&f);
        let bound = st.c_star() * test.sup_norm() * (1.0 + norm).powi(2);
        let phi1: Vec<f64> = (0..noise.n_states()).map(|i| corrector1(&m, &st, &f, i, test)).collect();
        let phi2 = corrector2_all(&m, &noise, &st, &f, test).unwrap();
        for i in 0..noise.n_states() {
            prop_assert!(phi1[i].abs() <= bound);
            prop_assert!(phi2[i].abs() <= bound);
        }
        let mean: f64 = phi2.iter().zip(noise.stationary()).map(|(p, w)| p * w).sum();
        prop_assert!(mean.abs() <= 1e-10 * bound.max(1.0));
        let set = CorrectorSet::new(&m, &noise, &st, test, 0.25).unwrap();
        let rho = m.density(&f);
        let all = set.phi_eps_all(&rho.values);
        prop_assert_eq!(all.len(), noise.n_states());
        prop_assert!(all.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_suggestion(key in prop::sample::select(vec!["nx", "dim", "velocity", "sigma_star"])) {
        let typo = format!("{key}x");
        let text = format!(
            "[model]\nvelocity = \"gt2\"\nsigma_star = 1.0\nsigma_upper = 2.0\n{typo} = 1\n"
        );
        let err = RunConfig::parse_str(&text).unwrap_err().to_string();
        prop_assert!(err.contains(&format!("model.{typo}")), "{}", err);
        prop_assert!(err.contains(&format!("did you mean `{key}`")), "{}", err);
    }
}
