//! Ensembles, ε-sweeps and convergence measurements.

mod stats;
pub mod verify;

pub use stats::{EnsembleStats, FunctionalStats};
pub use verify::VerifyRow;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::correctors::TestFunction;
use crate::error::{Error, Result};
use crate::kinetic::{fit_dt, KineticConfig, KineticSolver, Splitting};
use crate::limit::{max_stable_dt, Drift, SpdeConfig, SpdeSolver};
use crate::model::{DensityField, Model, TorusGrid};
use crate::noise::{NoiseModel, NoiseStatistics};
use crate::spectral::Spectral;

/// Generator for sample `index` of an ensemble seeded by `base`.
pub fn sample_rng(base: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng
}

/// Decorrelates base seeds for different ensembles of one experiment.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Kinetic time step, shrunk to divide the snapshot interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    /// `min(α ε^p, ε²/2)`.
    Power {
        alpha: f64,
        power: f64,
    },
    Fixed(f64),
}

impl DtRule {
    pub fn dt(&self, epsilon: f64, interval: f64) -> f64 {
        let target = match *self {
            DtRule::Power { alpha, power } => (alpha * epsilon.powf(power)).min(0.5 * epsilon * epsilon),
            DtRule::Fixed(dt) => dt,
        };
        fit_dt(target, interval)
    }
}

/// Everything shared by the kinetic and limit runs of one study.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: Model,
    pub noise: Option<NoiseModel>,
    pub stats: Option<NoiseStatistics>,
    pub rho0: DensityField,
    pub horizon: f64,
    pub snapshot_interval: f64,
    pub dt_rule: DtRule,
    pub splitting: Splitting,
    /// Limit-solver step; defaults to the largest stable one.
    pub spde_dt: Option<f64>,
    pub modes: Vec<TestFunction>,
    /// Sobolev index of the `H^s` statistic, if recorded.
    pub hs_index: Option<f64>,
}

impl Experiment {
    pub fn new(
        model: Model,
        noise: Option<NoiseModel>,
        rho0: DensityField,
        horizon: f64,
        snapshot_interval: f64,
    ) -> Result<Self> {
        let stats = noise.as_ref().map(NoiseStatistics::new).transpose()?;
        Ok(Self {
            model,
            noise,
            stats,
            rho0,
            horizon,
            snapshot_interval,
            dt_rule: DtRule::Power { alpha: 1.0, power: 3.0 },
            splitting: Splitting::Strang,
            spde_dt: None,
            modes: vec![TestFunction::cos([1, 0])],
            hs_index: None,
        })
    }

    pub fn kinetic_config(&self, epsilon: f64) -> Result<KineticConfig> {
        Ok(KineticConfig::new(
            epsilon,
            self.dt_rule.dt(epsilon, self.snapshot_interval),
            self.horizon,
            self.snapshot_interval,
        )?
        .with_splitting(self.splitting))
    }

    pub fn spde_dt(&self) -> f64 {
        self.spde_dt
            .unwrap_or_else(|| fit_dt(max_stable_dt(&self.model), self.snapshot_interval))
    }

    pub fn spde_config(&self, drift: Drift) -> SpdeConfig {
        let c = SpdeConfig::new(self.spde_dt(), self.horizon, self.snapshot_interval);
        if self.noise.is_some() {
            c.with_drift(drift)
        } else {
            c.without_noise()
        }
    }

    pub fn functional_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.modes.iter().map(mode_label).collect();
        names.push("l2sq".into());
        names
    }

    fn functionals(&self, rho: &DensityField) -> Vec<f64> {
        let g = self.model.grid;
        let mut out: Vec<f64> = self.modes.iter().map(|m| m.apply_density(g, rho)).collect();
        out.push(g.inner(&rho.values, &rho.values));
        out
    }
}

/// `cos1`, `sin2`, `cos1_1`, ...
pub fn mode_label(t: &TestFunction) -> String {
    let kind = match t.parity {
        crate::correctors::Parity::Cos => "cos",
        crate::correctors::Parity::Sin => "sin",
    };
    if t.mode[1] == 0 {
        format!("{kind}{}", t.mode[0])
    } else {
        format!("{kind}{}_{}", t.mode[0], t.mode[1])
    }
}

/// Which solver an ensemble runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Runner {
    Kinetic { epsilon: f64 },
    Limit { drift: Drift },
}

/// Per-sample output of an ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    /// Functionals of `ρ_T`, in [`Experiment::functional_names`] order.
    pub functionals: Vec<f64>,
    /// Kinetic only: `sup_t ‖f‖²`.
    pub sup_energy: f64,
    /// Kinetic only: `∫ ‖ε⁻¹ L f‖² dt`.
    pub defect_integral: f64,
    /// `∫ ‖ρ_t‖²_{H^s} dt` when the experiment records it.
    pub hs: f64,
}

/// Ensemble statistics plus the kinetic uniform-bound diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub stats: EnsembleStats,
    pub sup_energy: FunctionalStats,
    pub defect_integral: FunctionalStats,
    pub hs: FunctionalStats,
}

/// Runs `n_samples` independent members; sample `i` uses stream `i` of
/// `base_seed`. The result does not depend on thread scheduling.
pub fn run_ensemble(exp: &Experiment, runner: Runner, n_samples: usize, base_seed: u64) -> Result<Vec<SampleSummary>> {
    if n_samples < 2 {
        return Err(Error::OutOfRange(format!("need at least 2 samples, got {n_samples}")));
    }
    let sp = Spectral::new(exp.model.grid);
    let theta = exp.model.velocity.nondegeneracy_exponent();
    let hs_of = |times: &[f64], snaps: &[DensityField]| -> Result<f64> {
        match exp.hs_index {
            Some(s) => hs_norm_with(&sp, times, snaps, s, theta),
            None => Ok(0.0),
        }
    };
    let results: Vec<Result<SampleSummary>> = match runner {
        Runner::Kinetic { epsilon } => {
            let solver = KineticSolver::new(&exp.model, exp.noise.as_ref(), exp.kinetic_config(epsilon)?)?;
            (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let tr = solver.run(&exp.rho0, &mut sample_rng(base_seed, i))?;
                    Ok(SampleSummary {
                        functionals: exp.functionals(tr.final_density()),
                        sup_energy: tr.sup_energy(),
                        defect_integral: tr.defect_integral(),
                        hs: hs_of(&tr.times, &tr.snapshots)?,
                    })
                })
                .collect()
        }
        Runner::Limit { drift } => {
            let solver = SpdeSolver::new(&exp.model, exp.stats.as_ref(), exp.spde_config(drift))?;
            (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let tr = solver.run(&exp.rho0, &mut sample_rng(base_seed, i))?;
                    Ok(SampleSummary {
                        functionals: exp.functionals(tr.final_density()),
                        sup_energy: 0.0,
                        defect_integral: 0.0,
                        hs: hs_of(&tr.times, &tr.snapshots)?,
                    })
                })
                .collect()
        }
    };
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn summarize(exp: &Experiment, samples: &[SampleSummary]) -> EnsembleReport {
    let names = exp.functional_names();
    let functionals = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = samples.iter().map(|s| s.functionals[j]).collect();
            FunctionalStats::from_samples(name.clone(), &col)
        })
        .collect();
    let col = |f: fn(&SampleSummary) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    EnsembleReport {
        stats: EnsembleStats { functionals },
        sup_energy: FunctionalStats::from_samples("sup_energy", &col(|s| s.sup_energy)),
        defect_integral: FunctionalStats::from_samples("defect_integral", &col(|s| s.defect_integral)),
        hs: FunctionalStats::from_samples("hs", &col(|s| s.hs)),
    }
}

/// [`run_ensemble`] followed by [`summarize`].
pub fn ensemble_stats(exp: &Experiment, runner: Runner, n_samples: usize, base_seed: u64) -> Result<EnsembleReport> {
    Ok(summarize(exp, &run_ensemble(exp, runner, n_samples, base_seed)?))
}

/// `∫_0^T ‖ρ_t‖²_{H^s} dt` by the trapezoid rule over snapshots. Requires
/// `0 < s < θ/2` for the velocity model's non-degeneracy exponent `θ`.
pub fn hs_norm(grid: TorusGrid, times: &[f64], snapshots: &[DensityField], s: f64, theta: Option<f64>) -> Result<f64> {
    hs_norm_with(&Spectral::new(grid), times, snapshots, s, theta)
}

fn hs_norm_with(sp: &Spectral, times: &[f64], snapshots: &[DensityField], s: f64, theta: Option<f64>) -> Result<f64> {
    let Some(theta) = theta else {
        return Err(Error::OutOfRange(
            "the velocity model has no non-degeneracy exponent; H^s statistic undefined".into(),
        ));
    };
    if !(s > 0.0 && s < theta / 2.0) {
        return Err(Error::OutOfRange(format!(
            "need 0 < s < theta/2 = {}, got s = {s}",
            theta / 2.0
        )));
    }
    let vals: Vec<f64> = snapshots.iter().map(|r| sp.hs_norm_sq(&r.values, s)).collect();
    Ok(trapezoid(times, &vals))
}

fn trapezoid(times: &[f64], vals: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `‖a - b‖_{L²(0,T;L²)}` over matching snapshot lists.
pub fn space_time_error(grid: TorusGrid, times: &[f64], a: &[DensityField], b: &[DensityField]) -> f64 {
    let sq: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d: Vec<f64> = x.values.iter().zip(&y.values).map(|(p, q)| p - q).collect();
            grid.inner(&d, &d)
        })
        .collect();
    trapezoid(times, &sq).sqrt()
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    /// `mean:<name>` or `var:<name>`.
    pub functional: String,
    pub kinetic: f64,
    pub kinetic_sem: f64,
    pub limit: f64,
    pub limit_sem: f64,
    pub gap: f64,
    pub gap_sem: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub epsilon: f64,
    pub sup_energy: FunctionalStats,
    pub defect_integral: FunctionalStats,
    pub hs: FunctionalStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub epsilons: Vec<f64>,
    pub drift: Drift,
    pub rows: Vec<SweepRow>,
    pub bounds: Vec<BoundRow>,
    /// Noise off: `‖ρ^ε - ρ‖_{L²(0,T;L²)}` per ε.
    pub deterministic_error: Vec<f64>,
}

impl SweepReport {
    /// Gap column for one functional, ordered like `epsilons`.
    pub fn column(&self, functional: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.functional == functional).collect()
    }

    pub fn functionals(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.functional) {
                out.push(r.functional.clone());
            }
        }
        out
    }

    /// True when each gap exceeds its predecessor by at most `slack` gap
    /// standard errors.
    pub fn non_increasing(&self, functional: &str, slack: f64) -> bool {
        let col = self.column(functional);
        col.windows(2)
            .all(|w| w[1].gap <= w[0].gap + slack * w[1].gap_sem.hypot(w[0].gap_sem))
    }
}

type BoundStat = fn(&BoundRow) -> f64;

/// Acceptance thresholds of an ε-sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepThresholds {
    pub gap_slack: f64,
    pub band_ratio: f64,
    pub paper_separation: f64,
}

impl SweepReport {
    /// Largest increase of consecutive gaps, in combined standard errors.
    /// Zero when the column never grows.
    pub fn worst_gap_growth(&self, functional: &str) -> f64 {
        self.column(functional)
            .windows(2)
            .map(|w| {
                let rise = w[1].gap - w[0].gap;
                if rise <= 0.0 {
                    0.0
                } else {
                    rise / w[1].gap_sem.hypot(w[0].gap_sem)
                }
            })
            .fold(0.0, f64::max)
    }

    /// max/min ratio of a uniform-bound statistic across ε.
    pub fn band(&self, stat: fn(&BoundRow) -> f64) -> f64 {
        let v: Vec<f64> = self.bounds.iter().map(stat).collect();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        if hi == lo {
            1.0
        } else {
            hi / lo
        }
    }

    /// Band ratio after extrapolating sustained growth to `ε → 0`.
    ///
    /// A statistic that rises at every refinement is continued with the
    /// geometric ratio of its last two increments; non-shrinking increments
    /// give infinity. Columns that do not rise monotonically return
    /// [`band`](Self::band).
    pub fn extrapolated_band(&self, stat: fn(&BoundRow) -> f64) -> f64 {
        let v: Vec<f64> = self.bounds.iter().map(stat).collect();
        let rising = v.len() >= 3 && v.windows(2).all(|w| w[1] > w[0]);
        if !rising {
            return self.band(stat);
        }
        let n = v.len();
        let (prev, last) = (v[n - 2] - v[n - 3], v[n - 1] - v[n - 2]);
        let r = last / prev;
        if r >= 1.0 {
            return f64::INFINITY;
        }
        let limit = v[n - 1] + last * r / (1.0 - r);
        limit / v.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `(gap_other - gap_self) / stderr` at the smallest ε.
    pub fn separation_from(&self, other: &SweepReport) -> f64 {
        let eps = *self.epsilons.last().expect("non-empty sweep");
        self.rows
            .iter()
            .filter(|r| r.epsilon == eps)
            .filter_map(|r| {
                let o = other
                    .rows
                    .iter()
                    .find(|o| o.epsilon == eps && o.functional == r.functional)?;
                Some((o.gap - r.gap) / o.gap_sem.hypot(r.gap_sem))
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Deterministic sweeps: errors strictly decreasing. Stochastic sweeps:
    /// gap columns non-increasing up to the slack, bounded diagnostics, and
    /// separation from the paper-drift report when one is given.
    pub fn checks(&self, th: &SweepThresholds, paper: Option<&SweepReport>, with_hs: bool) -> Vec<VerifyRow> {
        let mut rows = Vec::new();
        if !self.deterministic_error.is_empty() {
            let worst = self
                .deterministic_error
                .windows(2)
                .map(|w| w[1] / w[0])
                .fold(0.0, f64::max);
            rows.push(VerifyRow::with_pass(
                "deterministic_error_decreasing",
                worst,
                1.0,
                worst < 1.0,
            ));
            return rows;
        }
        for f in self.functionals() {
            rows.push(VerifyRow::new(
                format!("gap_non_increasing:{f}"),
                self.worst_gap_growth(&f),
                th.gap_slack,
            ));
        }
        let mut stats: Vec<(&str, BoundStat)> = vec![
            ("sup_energy", |b| b.sup_energy.mean),
            ("defect_integral", |b| b.defect_integral.mean),
        ];
        if with_hs {
            stats.push(("hs", |b| b.hs.mean));
        }
        for (name, stat) in stats {
            rows.push(VerifyRow::new(
                format!("bound_band:{name}"),
                self.band(stat),
                th.band_ratio,
            ));
            rows.push(VerifyRow::new(
                format!("bound_growth:{name}"),
                self.extrapolated_band(stat),
                th.band_ratio,
            ));
        }
        if let Some(p) = paper {
            let sep = self.separation_from(p);
            rows.push(VerifyRow::with_pass(
                "paper_drift_separation",
                sep,
                th.paper_separation,
                sep >= th.paper_separation,
            ));
        }
        rows
    }
}

/// Compares kinetic ensembles at each ε with one limit ensemble. With the
/// noise off both sides are deterministic and the gap is the space-time
/// error against an RK4 Rosseland reference.
pub fn epsilon_sweep(
    exp: &Experiment,
    epsilons: &[f64],
    kinetic_samples: usize,
    limit_samples: usize,
    drift: Drift,
    base_seed: u64,
) -> Result<SweepReport> {
    let mut out = epsilon_sweep_drifts(exp, epsilons, kinetic_samples, limit_samples, &[drift], base_seed)?;
    Ok(out.remove(0))
}

/// [`epsilon_sweep`] for several limit drifts sharing the kinetic ensembles.
pub fn epsilon_sweep_drifts(
    exp: &Experiment,
    epsilons: &[f64],
    kinetic_samples: usize,
    limit_samples: usize,
    drifts: &[Drift],
    base_seed: u64,
) -> Result<Vec<SweepReport>> {
    if epsilons.windows(2).any(|w| w[1] >= w[0]) || epsilons.is_empty() {
        return Err(Error::InvalidConfig(
            "epsilon list must be non-empty and strictly decreasing".into(),
        ));
    }
    if exp.noise.is_none() {
        return Ok(vec![deterministic_sweep(exp, epsilons)?]);
    }
    let kinetic = epsilons
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            ensemble_stats(
                exp,
                Runner::Kinetic { epsilon: eps },
                kinetic_samples,
                derive_seed(base_seed, 100 + k as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    drifts
        .iter()
        .map(|&drift| {
            let limit = ensemble_stats(exp, Runner::Limit { drift }, limit_samples, derive_seed(base_seed, 1))?;
            Ok(gap_table(epsilons, &kinetic, &limit, drift))
        })
        .collect()
}

/// Gap table between kinetic reports (one per ε) and a limit report.
pub fn gap_table(epsilons: &[f64], kinetic: &[EnsembleReport], limit: &EnsembleReport, drift: Drift) -> SweepReport {
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for (&eps, kin) in epsilons.iter().zip(kinetic) {
        for (kf, lf) in kin.stats.functionals.iter().zip(&limit.stats.functionals) {
            rows.push(gap_row(
                eps,
                format!("mean:{}", kf.name),
                kf.mean,
                kf.sem,
                lf.mean,
                lf.sem,
            ));
            if kf.name != "l2sq" {
                rows.push(gap_row(
                    eps,
                    format!("var:{}", kf.name),
                    kf.variance,
                    kf.variance_sem,
                    lf.variance,
                    lf.variance_sem,
                ));
            }
        }
        bounds.push(BoundRow {
            epsilon: eps,
            sup_energy: kin.sup_energy.clone(),
            defect_integral: kin.defect_integral.clone(),
            hs: kin.hs.clone(),
        });
    }
    SweepReport {
        epsilons: epsilons.to_vec(),
        drift,
        rows,
        bounds,
        deterministic_error: Vec::new(),
    }
}

fn gap_row(epsilon: f64, functional: String, k: f64, ks: f64, l: f64, ls: f64) -> SweepRow {
    SweepRow {
        epsilon,
        functional,
        kinetic: k,
        kinetic_sem: ks,
        limit: l,
        limit_sem: ls,
        gap: (k - l).abs(),
        gap_sem: ks.hypot(ls),
    }
}

fn deterministic_sweep(exp: &Experiment, epsilons: &[f64]) -> Result<SweepReport> {
    let reference = SpdeSolver::new(&exp.model, None, exp.spde_config(Drift::Off))?.run_rk4(&exp.rho0)?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut bounds = Vec::new();
    let lim = exp.functionals(reference.final_density());
    for &eps in epsilons {
        let solver = KineticSolver::new(&exp.model, None, exp.kinetic_config(eps)?)?;
        let tr = solver.run(&exp.rho0, &mut sample_rng(0, 0))?;
        errors.push(space_time_error(
            exp.model.grid,
            &tr.times,
            &tr.snapshots,
            &reference.snapshots,
        ));
        for ((name, k), l) in exp
            .functional_names()
            .into_iter()
            .zip(exp.functionals(tr.final_density()))
            .zip(&lim)
        {
            rows.push(gap_row(eps, format!("mean:{name}"), k, 0.0, *l, 0.0));
        }
        let one = |name: &str, v: f64| FunctionalStats::from_samples(name, &[v, v]);
        bounds.push(BoundRow {
            epsilon: eps,
            sup_energy: one("sup_energy", tr.sup_energy()),
            defect_integral: one("defect_integral", tr.defect_integral()),
            hs: one("hs", 0.0),
        });
    }
    Ok(SweepReport {
        epsilons: epsilons.to_vec(),
        drift: Drift::Off,
        rows,
        bounds,
        deterministic_error: errors,
    })
}

/// Deterministic Rosseland convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log ε`.
    pub slope: f64,
    /// `‖ρ_ref(dt) - ρ_ref(dt/2)‖_{L²(0,T;L²)}`.
    pub reference_change: f64,
}

impl RateReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn checks(&self, min_slope: f64, reference_tolerance: f64) -> Vec<VerifyRow> {
        let worst = self.errors.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        vec![
            VerifyRow::with_pass("error_strictly_decreasing", worst, 1.0, self.strictly_decreasing()),
            VerifyRow::with_pass("fitted_slope", self.slope, min_slope, self.slope >= min_slope),
            VerifyRow::new("reference_self_consistency", self.reference_change, reference_tolerance),
        ]
    }
}

/// `L²(0,T;L²)` error of the noise-free kinetic density against an RK4
/// Rosseland reference with step `reference_dt`, for each ε.
pub fn deterministic_convergence(exp: &Experiment, epsilons: &[f64], reference_dt: f64) -> Result<RateReport> {
    let cfg = |dt: f64| SpdeConfig::new(dt, exp.horizon, exp.snapshot_interval).without_noise();
    let reference = SpdeSolver::new(&exp.model, None, cfg(reference_dt))?.run_rk4(&exp.rho0)?;
    let finer = SpdeSolver::new(&exp.model, None, cfg(0.5 * reference_dt))?.run_rk4(&exp.rho0)?;
    let reference_change = space_time_error(exp.model.grid, &reference.times, &reference.snapshots, &finer.snapshots);
    let errors = epsilons
        .iter()
        .map(|&eps| {
            let solver = KineticSolver::new(&exp.model, None, exp.kinetic_config(eps)?)?;
            let tr = solver.run(&exp.rho0, &mut sample_rng(0, 0))?;
            Ok(space_time_error(
                exp.model.grid,
                &tr.times,
                &tr.snapshots,
                &reference.snapshots,
            ))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RateReport {
        epsilons: epsilons.to_vec(),
        slope: log_slope(epsilons, &errors),
        errors,
        reference_change,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
