//! Command-line front end. Every subcommand writes plain CSV files and a
//! `manifest.csv` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::harness::verify::{verify, MartingaleCheck};
use crate::harness::{deterministic_convergence, epsilon_sweep_drifts, sample_rng, SweepThresholds, VerifyRow};
use crate::kinetic::{fit_dt, KineticSolver};
use crate::limit::{max_stable_dt, Drift, SpdeSolver};
use crate::model::{DensityField, TorusGrid};

#[derive(Debug, Parser)]
#[command(name = "rosseland", version, about = "Kinetic and stochastic Rosseland experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, default_value = "rosseland.toml")]
    pub config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides every sample count of the command.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub drift: Option<Drift>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Poisson correctors, drift fields and the covariance spectrum.
    NoiseInfo,
    /// Kinetic trajectories at `[simulation] epsilon`.
    RunKinetic,
    /// Limit SPDE trajectories.
    RunSpde,
    /// Kinetic-versus-limit ε-sweep with uniform-bound diagnostics.
    Sweep,
    /// Deterministic Rosseland convergence rate.
    Rates,
    /// Identity table, including the martingale-problem Monte Carlo.
    Verify {
        /// Skip the Monte Carlo rows.
        #[arg(long)]
        no_martingale: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::NoiseInfo => "noise-info",
            Command::RunKinetic => "run-kinetic",
            Command::RunSpde => "run-spde",
            Command::Sweep => "sweep",
            Command::Rates => "rates",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Result of a dispatched command and its acceptance rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub checks: Vec<VerifyRow>,
}

impl Outcome {
    pub fn failures(&self) -> Vec<&VerifyRow> {
        self.checks.iter().filter(|r| !r.passed).collect()
    }
}

/// `0` on success, `1` on an acceptance breach, `2` on any error.
pub fn main_with(cli: Cli) -> ExitCode {
    match dispatch(&cli) {
        Ok(outcome) => {
            for r in &outcome.checks {
                let verdict = if r.passed { "PASS" } else { "FAIL" };
                println!(
                    "{:<40} {:>24} {:>24} {verdict}",
                    r.identity,
                    num(r.residual),
                    num(r.tolerance)
                );
            }
            let failures = outcome.failures();
            if failures.is_empty() {
                return ExitCode::SUCCESS;
            }
            eprintln!("identity,residual,tolerance,pass");
            for r in failures {
                eprintln!("{}", check_line(r));
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<Outcome> {
    let text = fs::read_to_string(&cli.config)?;
    let mut config = RunConfig::parse_str(&text)?;
    if let Some(seed) = cli.seed {
        config.harness.seed = seed;
    }
    if let Some(n) = cli.samples {
        if n < 2 && cli.command != Command::RunKinetic && cli.command != Command::RunSpde {
            return Err(Error::InvalidConfig(format!("--samples must be at least 2, got {n}")));
        }
        config.harness.kinetic_samples = n;
        config.harness.limit_samples = n;
        config.harness.martingale_samples = n;
    }
    if let Some(d) = cli.drift {
        config.harness.drift = d;
    }
    let out = cli.out.clone().unwrap_or_else(|| config.output.clone());
    fs::create_dir_all(&out)?;
    let samples = match cli.command {
        Command::RunKinetic | Command::RunSpde => cli.samples.unwrap_or(1),
        Command::Verify { .. } => config.harness.martingale_samples,
        Command::Sweep => config.harness.kinetic_samples,
        Command::NoiseInfo | Command::Rates => 0,
    };
    write_manifest(&out, cli.command.name(), &text, &config, samples)?;
    let checks = match cli.command {
        Command::NoiseInfo => noise_info(&config, &out)?,
        Command::RunKinetic => run_kinetic(&config, &out, samples)?,
        Command::RunSpde => run_spde(&config, &out, samples)?,
        Command::Sweep => sweep(&config, &out)?,
        Command::Rates => rates(&config, &out)?,
        Command::Verify { no_martingale } => verify_cmd(&config, &out, !no_martingale)?,
    };
    Ok(Outcome { out_dir: out, checks })
}

/// Seventeen significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a comma-separated file with a header row and LF endings.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn check_line(r: &VerifyRow) -> String {
    format!(
        "{},{},{},{}",
        r.identity,
        num(r.residual),
        num(r.tolerance),
        if r.passed { "PASS" } else { "FAIL" }
    )
}

fn write_checks(path: &Path, rows: &[VerifyRow]) -> Result<Vec<VerifyRow>> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| check_line(r).split(',').map(str::to_string).collect())
        .collect();
    write_csv(path, &["identity", "residual", "tolerance", "pass"], &body)?;
    Ok(rows.to_vec())
}

fn write_manifest(out: &Path, command: &str, text: &str, config: &RunConfig, samples: usize) -> Result<()> {
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    let rows = [
        ["command", command],
        ["config_sha256", &hash],
        ["seed", &config.harness.seed.to_string()],
        ["samples", &samples.to_string()],
        ["drift", &config.harness.drift.to_string()],
        ["version", env!("CARGO_PKG_VERSION")],
    ]
    .iter()
    .map(|r| r.iter().map(|s| s.to_string()).collect())
    .collect::<Vec<_>>();
    write_csv(&out.join("manifest.csv"), &["key", "value"], &rows)
}

fn snapshot_rows(grid: TorusGrid, sample: usize, times: &[f64], snaps: &[DensityField], rows: &mut Vec<Vec<String>>) {
    for (t, rho) in times.iter().zip(snaps) {
        for (i, v) in rho.values.iter().enumerate() {
            let x = grid.point(i);
            rows.push(vec![
                sample.to_string(),
                num(*t),
                i.to_string(),
                num(x[0]),
                num(x[1]),
                num(*v),
            ]);
        }
    }
}

const SNAPSHOT_HEADER: [&str; 6] = ["sample", "time", "index", "x", "y", "rho"];

fn noise_info(config: &RunConfig, out: &Path) -> Result<Vec<VerifyRow>> {
    let exp = config.experiment()?;
    let (Some(noise), Some(stats)) = (&exp.noise, &exp.stats) else {
        return Err(Error::InvalidConfig(
            "noise-info needs [noise] kind other than off".into(),
        ));
    };
    let grid = exp.model.grid;
    let ns = noise.n_states();
    let mut header: Vec<String> = ["index", "x", "y"].iter().map(|s| s.to_string()).collect();
    header.extend((0..ns).map(|i| format!("n{i}")));
    header.extend((0..ns).map(|i| format!("psi{i}")));
    header.extend(["h_paper", "h_effective", "k_diag"].iter().map(|s| s.to_string()));
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            let mut r = vec![i.to_string(), num(x[0]), num(x[1])];
            r.extend((0..ns).map(|s| num(noise.state(s)[i])));
            r.extend((0..ns).map(|s| num(stats.psi()[s][i])));
            r.extend([
                num(stats.drift_paper()[i]),
                num(stats.drift_effective()[i]),
                num(stats.kernel(i, i)),
            ]);
            r
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&out.join("noise.csv"), &h, &rows)?;
    let retained = stats.retained_modes().len();
    let spectrum: Vec<Vec<String>> = stats
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(j, l)| vec![j.to_string(), num(*l), (j < retained).to_string()])
        .collect();
    write_csv(
        &out.join("spectrum.csv"),
        &["index", "eigenvalue", "retained"],
        &spectrum,
    )?;

    let nu: Vec<String> = noise.stationary().iter().map(|v| format!("{v:.6}")).collect();
    let hp = stats.drift_paper();
    println!("states            {ns}");
    println!("stationary law    [{}]", nu.join(", "));
    println!(
        "H_paper min/max   {:.6e} / {:.6e}",
        hp.iter().copied().fold(f64::INFINITY, f64::min),
        hp.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    );
    println!("C_*               {:.6e}", stats.c_star());
    for (j, (l, _)) in stats.retained_modes().iter().enumerate() {
        println!("lambda_{}          {:.16e}", j + 1, l);
    }
    Ok(Vec::new())
}

fn run_kinetic(config: &RunConfig, out: &Path, samples: usize) -> Result<Vec<VerifyRow>> {
    let exp = config.experiment()?;
    let cfg = config.kinetic_config(config.simulation.epsilon)?;
    let solver = KineticSolver::new(&exp.model, exp.noise.as_ref(), cfg)?;
    let mut snaps = Vec::new();
    let mut diag = Vec::new();
    for s in 0..samples {
        let tr = solver
            .run(&exp.rho0, &mut sample_rng(config.harness.seed, s))
            .map_err(|e| Error::Sample {
                index: s,
                source: Box::new(e),
            })?;
        snapshot_rows(exp.model.grid, s, &tr.times, &tr.snapshots, &mut snaps);
        for (k, d) in tr.diagnostics.iter().enumerate() {
            diag.push(vec![
                s.to_string(),
                k.to_string(),
                num(d.t),
                num(d.mass),
                num(d.energy),
                num(d.defect),
            ]);
        }
    }
    write_csv(&out.join("kinetic_snapshots.csv"), &SNAPSHOT_HEADER, &snaps)?;
    write_csv(
        &out.join("kinetic_diagnostics.csv"),
        &["sample", "step", "time", "mass", "energy", "defect"],
        &diag,
    )?;
    Ok(Vec::new())
}

fn run_spde(config: &RunConfig, out: &Path, samples: usize) -> Result<Vec<VerifyRow>> {
    let exp = config.experiment()?;
    let solver = SpdeSolver::new(&exp.model, exp.stats.as_ref(), exp.spde_config(config.harness.drift))?;
    let dt = exp.spde_dt();
    let mut snaps = Vec::new();
    let mut diag = Vec::new();
    for s in 0..samples {
        let tr = solver
            .run(&exp.rho0, &mut sample_rng(config.harness.seed, s))
            .map_err(|e| Error::Sample {
                index: s,
                source: Box::new(e),
            })?;
        snapshot_rows(exp.model.grid, s, &tr.times, &tr.snapshots, &mut snaps);
        for (k, (m, l)) in tr.mass.iter().zip(&tr.l2).enumerate() {
            diag.push(vec![s.to_string(), k.to_string(), num(k as f64 * dt), num(*m), num(*l)]);
        }
    }
    write_csv(&out.join("spde_snapshots.csv"), &SNAPSHOT_HEADER, &snaps)?;
    write_csv(
        &out.join("spde_diagnostics.csv"),
        &["sample", "step", "time", "mass", "l2"],
        &diag,
    )?;
    Ok(Vec::new())
}

fn sweep(config: &RunConfig, out: &Path) -> Result<Vec<VerifyRow>> {
    let exp = config.experiment()?;
    let h = &config.harness;
    let mut drifts = vec![h.drift];
    if exp.noise.is_some() && h.drift == Drift::Effective {
        drifts.push(Drift::Paper);
    }
    let reports = epsilon_sweep_drifts(
        &exp,
        &config.simulation.epsilons,
        h.kinetic_samples,
        h.limit_samples,
        &drifts,
        h.seed,
    )?;
    let mut rows = Vec::new();
    for r in &reports {
        for g in &r.rows {
            rows.push(vec![
                r.drift.to_string(),
                num(g.epsilon),
                g.functional.clone(),
                num(g.kinetic),
                num(g.kinetic_sem),
                num(g.limit),
                num(g.limit_sem),
                num(g.gap),
                num(g.gap_sem),
            ]);
        }
    }
    write_csv(
        &out.join("sweep.csv"),
        &[
            "drift",
            "epsilon",
            "functional",
            "kinetic_mean",
            "kinetic_sem",
            "limit_mean",
            "limit_sem",
            "gap",
            "gap_sem",
        ],
        &rows,
    )?;
    let primary = &reports[0];
    let bounds: Vec<Vec<String>> = primary
        .bounds
        .iter()
        .map(|b| {
            vec![
                num(b.epsilon),
                num(b.sup_energy.mean),
                num(b.sup_energy.sem),
                num(b.defect_integral.mean),
                num(b.defect_integral.sem),
            ]
        })
        .collect();
    write_csv(
        &out.join("bounds.csv"),
        &[
            "epsilon",
            "sup_energy",
            "sup_energy_sem",
            "defect_integral",
            "defect_integral_sem",
        ],
        &bounds,
    )?;
    if let Some(s) = exp.hs_index {
        let hs: Vec<Vec<String>> = primary
            .bounds
            .iter()
            .map(|b| vec![num(b.epsilon), num(s), num(b.hs.mean), num(b.hs.sem)])
            .collect();
        write_csv(&out.join("hs.csv"), &["epsilon", "s", "mean", "sem"], &hs)?;
    }
    if !primary.deterministic_error.is_empty() {
        let det: Vec<Vec<String>> = primary
            .epsilons
            .iter()
            .zip(&primary.deterministic_error)
            .map(|(e, v)| vec![num(*e), num(*v)])
            .collect();
        write_csv(&out.join("deterministic.csv"), &["epsilon", "error"], &det)?;
    }
    let th = SweepThresholds {
        gap_slack: h.gap_slack,
        band_ratio: h.band_ratio,
        paper_separation: h.paper_separation,
    };
    let checks = primary.checks(&th, reports.get(1), exp.hs_index.is_some());
    write_checks(&out.join("sweep_checks.csv"), &checks)
}

fn rates(config: &RunConfig, out: &Path) -> Result<Vec<VerifyRow>> {
    let mut exp = config.experiment()?;
    exp.noise = None;
    exp.stats = None;
    let reference_dt = config
        .simulation
        .reference_dt
        .unwrap_or_else(|| fit_dt(max_stable_dt(&exp.model), exp.snapshot_interval));
    let r = deterministic_convergence(&exp, &config.simulation.epsilons, reference_dt)?;
    let rows: Vec<Vec<String>> = r
        .epsilons
        .iter()
        .zip(&r.errors)
        .map(|(e, v)| vec![num(*e), num(*v)])
        .collect();
    write_csv(&out.join("rates.csv"), &["epsilon", "error"], &rows)?;
    println!("slope {:.6}, reference change {:.3e}", r.slope, r.reference_change);
    write_checks(
        &out.join("rates_checks.csv"),
        &r.checks(config.harness.min_slope, config.harness.reference_tolerance),
    )
}

fn verify_cmd(config: &RunConfig, out: &Path, martingale: bool) -> Result<Vec<VerifyRow>> {
    let exp = config.experiment()?;
    let h = &config.harness;
    let eps = config.simulation.epsilon;
    let check = MartingaleCheck {
        config: config.kinetic_config(eps)?,
        test: exp.modes[0],
        samples: h.martingale_samples,
        window: (h.martingale_start, h.martingale_end),
        seed: h.seed,
        residual_sigmas: h.residual_sigmas,
        qv_sigmas: h.qv_sigmas,
    };
    let rows = verify(&exp, eps, h.seed, martingale.then_some(&check))?;
    write_checks(&out.join("verify.csv"), &rows)
}
