//! Run configuration: a flat, sectioned TOML file.
//!
//! ```toml
//! [model]
//! nx = 32
//! velocity = "gt2"          # gt2 | cont
//! opacity = "rational"      # constant | rational
//! sigma_star = 1.0
//! sigma_upper = 2.0
//!
//! [noise]
//! kind = "telegraph"        # off | telegraph | chain
//! amplitude = 1.0
//! rate = 1.0
//!
//! [simulation]
//! epsilons = [0.5, 0.25, 0.125]
//! horizon = 0.25
//! snapshot_interval = 0.0625
//! ```
//!
//! Every key is optional except where a section's kind requires it. Unknown
//! keys are rejected with a suggestion, and all violations are reported
//! together.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use toml::{Table, Value};

use crate::correctors::{Parity, TestFunction};
use crate::error::{Error, Result};
use crate::harness::{DtRule, Experiment};
use crate::kinetic::{KineticConfig, Splitting};
use crate::limit::Drift;
use crate::model::{DensityField, Model, Opacity, TorusGrid, VelocityQuadrature, VelocitySpec};
use crate::noise::NoiseModel;

/// Every violation found while reading a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub nx: usize,
    pub dim: usize,
    pub velocity: VelocitySpec,
    pub opacity: OpacitySpec,
    pub rho0_mean: f64,
    pub rho0_amplitude: f64,
    pub rho0_mode: [i64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpacitySpec {
    Constant(f64),
    Rational { sigma_star: f64, sigma_upper: f64 },
}

/// Noise profiles are `amplitude · cos(2π k·x)` with the section's `mode`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSection {
    Off,
    Telegraph {
        amplitude: f64,
        rate: f64,
        mode: [i64; 2],
    },
    /// States `amplitudes[i] · cos(2π k·x)`, centered under the stationary
    /// law of `generator`.
    Chain {
        amplitudes: Vec<f64>,
        generator: Vec<Vec<f64>>,
        mode: [i64; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSection {
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    pub snapshot_interval: f64,
    pub dt_rule: DtRule,
    pub spde_dt: Option<f64>,
    pub reference_dt: Option<f64>,
    pub splitting: Splitting,
}

/// Ensemble sizes, seeds and every acceptance threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessSection {
    pub modes: Vec<TestFunction>,
    pub kinetic_samples: usize,
    pub limit_samples: usize,
    pub seed: u64,
    pub drift: Drift,
    pub hs_index: Option<f64>,
    /// Sweep gaps may grow by this many combined standard errors.
    pub gap_slack: f64,
    /// Largest allowed max/min ratio of a uniform-bound statistic.
    pub band_ratio: f64,
    /// Paper-drift gap must exceed the effective one by this many standard
    /// errors at the smallest ε.
    pub paper_separation: f64,
    pub min_slope: f64,
    pub reference_tolerance: f64,
    pub martingale_samples: usize,
    pub martingale_start: f64,
    pub martingale_end: f64,
    pub residual_sigmas: f64,
    pub qv_sigmas: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub noise: NoiseSection,
    pub simulation: SimulationSection,
    pub harness: HarnessSection,
    pub output: PathBuf,
}

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(RunConfig::parse_str(&text)?)
}

impl RunConfig {
    pub fn parse_str(text: &str) -> std::result::Result<Self, ConfigErrors> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigErrors(vec![e.to_string()]))?;
        let mut errors = Vec::new();
        const SECTIONS: [&str; 5] = ["model", "noise", "simulation", "harness", "output"];
        for (key, value) in &root {
            if !SECTIONS.contains(&key.as_str()) {
                errors.push(unknown("", key, &SECTIONS));
            } else if !value.is_table() {
                errors.push(format!("`{key}` must be a section"));
            }
        }
        let section = |name: &str| root.get(name).and_then(Value::as_table).cloned().unwrap_or_default();

        let mut s = Section::new("model", section("model"));
        let model = read_model(&mut s);
        errors.extend(s.finish());
        let mut s = Section::new("noise", section("noise"));
        let noise = read_noise(&mut s);
        errors.extend(s.finish());
        let mut s = Section::new("simulation", section("simulation"));
        let simulation = read_simulation(&mut s);
        errors.extend(s.finish());
        let mut s = Section::new("harness", section("harness"));
        let harness = read_harness(&mut s, simulation.horizon);
        errors.extend(s.finish());
        let mut s = Section::new("output", section("output"));
        let output = PathBuf::from(s.string("dir", "out"));
        errors.extend(s.finish());

        let config = RunConfig {
            model,
            noise,
            simulation,
            harness,
            output,
        };
        errors.extend(config.constraint_errors());
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    fn constraint_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let sim = &self.simulation;
        if let DtRule::Fixed(dt) = sim.dt_rule {
            for &eps in sim.all_epsilons().iter() {
                if dt > 0.5 * eps * eps {
                    errors.push(format!(
                        "simulation.dt: dt = {dt} violates the rule dt <= epsilon^2/2 = {} at epsilon = {eps}",
                        0.5 * eps * eps
                    ));
                }
            }
        }
        if sim.horizon > 0.0 && sim.snapshot_interval > 0.0 {
            let r = sim.horizon / sim.snapshot_interval;
            if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
                errors.push(format!(
                    "simulation.snapshot_interval: {} does not divide horizon {}",
                    sim.snapshot_interval, sim.horizon
                ));
            }
        }
        let h = &self.harness;
        if let (Some(s), VelocitySpec::Gt2) = (h.hs_index, self.model.velocity) {
            errors.push(format!(
                "harness.hs_index: s = {s} needs a velocity model with a non-degeneracy exponent (cont)"
            ));
        } else if let Some(s) = h.hs_index {
            if !(s > 0.0 && s < 0.5) {
                errors.push(format!("harness.hs_index: need 0 < s < theta/2 = 0.5, got {s}"));
            }
        }
        if !(h.martingale_start >= 0.0 && h.martingale_start < h.martingale_end && h.martingale_end <= sim.horizon) {
            errors.push(format!(
                "harness.martingale_start/end: need 0 <= s < t <= horizon, got ({}, {})",
                h.martingale_start, h.martingale_end
            ));
        }
        let max_mode = (self.model.nx / 2) as i64;
        let too_high = |m: [i64; 2]| m[0].abs() >= max_mode || m[1].abs() >= max_mode;
        if too_high(self.model.rho0_mode) {
            errors.push(format!(
                "model.rho0_mode: {:?} is not resolved by nx = {}",
                self.model.rho0_mode, self.model.nx
            ));
        }
        if h.modes.iter().any(|t| too_high(t.mode)) {
            errors.push(format!(
                "harness.modes: a mode is not resolved by nx = {}",
                self.model.nx
            ));
        }
        if self.model.dim == 1 && (self.model.rho0_mode[1] != 0 || h.modes.iter().any(|t| t.mode[1] != 0)) {
            errors.push("modes with a second component need dim = 2".into());
        }
        errors
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.model.nx, self.model.dim)
    }

    pub fn build_model(&self) -> Result<Model> {
        let grid = self.grid()?;
        let velocity = VelocityQuadrature::build(self.model.velocity, self.model.dim)?;
        let opacity = match self.model.opacity {
            OpacitySpec::Constant(v) => Opacity::constant(v)?,
            OpacitySpec::Rational {
                sigma_star,
                sigma_upper,
            } => Opacity::rational(sigma_star, sigma_upper)?,
        };
        Model::new(grid, velocity, opacity)
    }

    pub fn build_noise(&self) -> Result<Option<NoiseModel>> {
        let grid = self.grid()?;
        let profile = |a: f64, mode: [i64; 2]| cosine(grid, a, mode);
        match &self.noise {
            NoiseSection::Off => Ok(None),
            NoiseSection::Telegraph { amplitude, rate, mode } => {
                Ok(Some(NoiseModel::telegraph(grid, profile(*amplitude, *mode), *rate)?))
            }
            NoiseSection::Chain {
                amplitudes,
                generator,
                mode,
            } => {
                let n = generator.len();
                if generator.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidNoise("generator must be square".into()));
                }
                let m = DMatrix::from_fn(n, n, |i, j| generator[i][j]);
                let states = amplitudes.iter().map(|&a| profile(a, *mode)).collect();
                Ok(Some(NoiseModel::centered(grid, states, m)?))
            }
        }
    }

    pub fn initial_density(&self) -> Result<DensityField> {
        let grid = self.grid()?;
        let m = &self.model;
        let bump = cosine(grid, m.rho0_amplitude, m.rho0_mode);
        Ok(DensityField::new(bump.into_iter().map(|b| m.rho0_mean + b).collect()))
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let mut exp = Experiment::new(
            self.build_model()?,
            self.build_noise()?,
            self.initial_density()?,
            self.simulation.horizon,
            self.simulation.snapshot_interval,
        )?;
        exp.dt_rule = self.simulation.dt_rule;
        exp.spde_dt = self.simulation.spde_dt;
        exp.splitting = self.simulation.splitting;
        exp.modes = self.harness.modes.clone();
        exp.hs_index = self.harness.hs_index;
        Ok(exp)
    }

    pub fn kinetic_config(&self, epsilon: f64) -> Result<KineticConfig> {
        let sim = &self.simulation;
        Ok(KineticConfig::new(
            epsilon,
            sim.dt_rule.dt(epsilon, sim.snapshot_interval),
            sim.horizon,
            sim.snapshot_interval,
        )?
        .with_splitting(sim.splitting))
    }
}

impl SimulationSection {
    fn all_epsilons(&self) -> Vec<f64> {
        let mut v = self.epsilons.clone();
        v.push(self.epsilon);
        v
    }
}

fn cosine(grid: TorusGrid, amplitude: f64, mode: [i64; 2]) -> Vec<f64> {
    grid.points()
        .map(|x| amplitude * (2.0 * PI * (mode[0] as f64 * x[0] + mode[1] as f64 * x[1])).cos())
        .collect()
}

fn read_model(s: &mut Section) -> ModelSection {
    let nx = s.usize("nx", 32);
    let dim = s.usize("dim", 1);
    if nx < 4 || !nx.is_multiple_of(2) {
        s.error("nx", format!("need an even grid size >= 4, got {nx}"));
    }
    if dim != 1 && dim != 2 {
        s.error("dim", format!("must be 1 or 2, got {dim}"));
    }
    let velocity = match s.string("velocity", "gt2").as_str() {
        "gt2" => VelocitySpec::Gt2,
        "cont" => {
            let nodes = s.usize("nodes", 8);
            if nodes < 2 {
                s.error("nodes", format!("need at least 2 nodes, got {nodes}"));
            }
            VelocitySpec::Cont { nodes }
        }
        other => {
            s.error(
                "velocity",
                format!("unknown velocity model `{other}`, expected gt2 or cont"),
            );
            VelocitySpec::Gt2
        }
    };
    let opacity = match s.string("opacity", "rational").as_str() {
        "constant" => OpacitySpec::Constant(s.positive("sigma_star", 1.0)),
        "rational" => {
            let sigma_star = s.positive("sigma_star", 1.0);
            let sigma_upper = s.positive("sigma_upper", 2.0);
            if sigma_upper < sigma_star {
                s.error(
                    "sigma_upper",
                    format!("must be >= sigma_star = {sigma_star}, got {sigma_upper}"),
                );
            }
            OpacitySpec::Rational {
                sigma_star,
                sigma_upper,
            }
        }
        other => {
            s.error(
                "opacity",
                format!("unknown opacity `{other}`, expected constant or rational"),
            );
            OpacitySpec::Constant(1.0)
        }
    };
    let rho0_mean = s.positive("rho0_mean", 1.0);
    let rho0_amplitude = s.f64("rho0_amplitude", 0.5);
    if rho0_amplitude.abs() >= rho0_mean {
        s.error(
            "rho0_amplitude",
            format!("|amplitude| must be below rho0_mean = {rho0_mean} for a positive density"),
        );
    }
    let rho0_mode = s.mode("rho0_mode", [1, 0]);
    ModelSection {
        nx,
        dim,
        velocity,
        opacity,
        rho0_mean,
        rho0_amplitude,
        rho0_mode,
    }
}

fn read_noise(s: &mut Section) -> NoiseSection {
    match s.string("kind", "off").as_str() {
        "off" => NoiseSection::Off,
        "telegraph" => NoiseSection::Telegraph {
            amplitude: s.f64("amplitude", 1.0),
            rate: s.positive("rate", 1.0),
            mode: s.mode("mode", [1, 0]),
        },
        "chain" => {
            let amplitudes = s.f64_list("amplitudes", &[]);
            let generator = s.matrix("generator");
            if generator.len() != amplitudes.len() || generator.len() < 2 {
                s.error(
                    "generator",
                    format!(
                        "need a square generator matching {} amplitudes (at least 2 states)",
                        amplitudes.len()
                    ),
                );
            }
            NoiseSection::Chain {
                amplitudes,
                generator,
                mode: s.mode("mode", [1, 0]),
            }
        }
        other => {
            s.error(
                "kind",
                format!("unknown noise kind `{other}`, expected off, telegraph or chain"),
            );
            NoiseSection::Off
        }
    }
}

fn read_simulation(s: &mut Section) -> SimulationSection {
    let epsilon = s.positive("epsilon", 0.25);
    let epsilons = s.f64_list("epsilons", &[0.5, 0.25, 0.125]);
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0)) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        s.error(
            "epsilons",
            "must be a non-empty, positive, strictly decreasing list".into(),
        );
    }
    let horizon = s.positive("horizon", 0.25);
    let snapshot_interval = s.positive("snapshot_interval", horizon / 4.0);
    let dt_rule = match s.optional_f64("dt") {
        Some(dt) => {
            if !(dt > 0.0) {
                s.error("dt", format!("must be positive, got {dt}"));
            }
            DtRule::Fixed(dt)
        }
        None => DtRule::Power {
            alpha: s.positive("dt_alpha", 1.0),
            power: s.positive("dt_power", 3.0),
        },
    };
    let spde_dt = s.optional_f64("spde_dt");
    let reference_dt = s.optional_f64("reference_dt");
    for (key, v) in [("spde_dt", spde_dt), ("reference_dt", reference_dt)] {
        if v.is_some_and(|v| !(v > 0.0)) {
            s.error(key, "must be positive".into());
        }
    }
    let splitting = match s.string("splitting", "strang").as_str() {
        "strang" => Splitting::Strang,
        "lie" => Splitting::Lie,
        other => {
            s.error("splitting", format!("expected strang or lie, got `{other}`"));
            Splitting::Strang
        }
    };
    SimulationSection {
        epsilon,
        epsilons,
        horizon,
        snapshot_interval,
        dt_rule,
        spde_dt,
        reference_dt,
        splitting,
    }
}

fn read_harness(s: &mut Section, horizon: f64) -> HarnessSection {
    let labels = s.string_list("modes", &["cos1"]);
    let modes = labels
        .iter()
        .filter_map(|l| match parse_mode_label(l) {
            Some(t) => Some(t),
            None => {
                s.error(
                    "modes",
                    format!("cannot parse mode `{l}`, expected e.g. cos1, sin2, cos1_1"),
                );
                None
            }
        })
        .collect();
    let kinetic_samples = s.usize("kinetic_samples", 500);
    let limit_samples = s.usize("limit_samples", 2000);
    let martingale_samples = s.usize("martingale_samples", 10_000);
    for (key, n) in [
        ("kinetic_samples", kinetic_samples),
        ("limit_samples", limit_samples),
        ("martingale_samples", martingale_samples),
    ] {
        if n < 2 {
            s.error(key, format!("need at least 2 samples, got {n}"));
        }
    }
    let seed = s.u64("seed", 2024);
    let drift_name = s.string("drift", "effective");
    let drift = drift_name.parse().unwrap_or_else(|e: Error| {
        s.error("drift", e.to_string());
        Drift::Effective
    });
    HarnessSection {
        modes,
        kinetic_samples,
        limit_samples,
        seed,
        drift,
        hs_index: s.optional_f64("hs_index"),
        gap_slack: s.positive("gap_slack", 1.0),
        band_ratio: s.positive("band_ratio", 2.0),
        paper_separation: s.positive("paper_separation", 3.0),
        min_slope: s.positive("min_slope", 0.8),
        reference_tolerance: s.positive("reference_tolerance", 1e-6),
        martingale_samples,
        martingale_start: s.f64("martingale_start", horizon / 2.0),
        martingale_end: s.f64("martingale_end", horizon),
        residual_sigmas: s.positive("residual_sigmas", 3.0),
        qv_sigmas: s.positive("qv_sigmas", 5.0),
    }
}

/// Parses `cos1`, `sin2`, `cos1_2`.
pub fn parse_mode_label(label: &str) -> Option<TestFunction> {
    let (parity, rest) = if let Some(r) = label.strip_prefix("cos") {
        (Parity::Cos, r)
    } else {
        (Parity::Sin, label.strip_prefix("sin")?)
    };
    let mut parts = rest.split('_');
    let k0: i64 = parts.next()?.parse().ok()?;
    let k1: i64 = match parts.next() {
        Some(p) => p.parse().ok()?,
        None => 0,
    };
    if parts.next().is_some() || (k0 == 0 && k1 == 0) {
        return None;
    }
    Some(match parity {
        Parity::Cos => TestFunction::cos([k0, k1]),
        Parity::Sin => TestFunction::sin([k0, k1]),
    })
}

fn unknown(section: &str, key: &str, known: &[&str]) -> String {
    let path = if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    };
    let best = known
        .iter()
        .map(|k| (strsim::levenshtein(key, k), *k))
        .min()
        .filter(|(d, k)| *d <= (k.len().max(key.len()) / 2).max(2));
    match best {
        Some((_, k)) => format!("{path}: unknown key, did you mean `{k}`?"),
        None => format!("{path}: unknown key"),
    }
}

/// Typed access to one section that records consumed keys and errors.
struct Section {
    name: &'static str,
    table: Table,
    known: BTreeSet<&'static str>,
    errors: Vec<String>,
}

impl Section {
    fn new(name: &'static str, table: Table) -> Self {
        Self {
            name,
            table,
            known: BTreeSet::new(),
            errors: Vec::new(),
        }
    }

    fn error(&mut self, key: &str, msg: String) {
        self.errors.push(format!("{}.{key}: {msg}", self.name));
    }

    fn get(&mut self, key: &'static str) -> Option<Value> {
        self.known.insert(key);
        self.table.get(key).cloned()
    }

    fn optional_f64(&mut self, key: &'static str) -> Option<f64> {
        match self.get(key)? {
            Value::Float(v) => Some(v),
            Value::Integer(v) => Some(v as f64),
            other => {
                self.error(key, format!("expected a number, got {}", other.type_str()));
                None
            }
        }
    }

    fn f64(&mut self, key: &'static str, default: f64) -> f64 {
        self.optional_f64(key).unwrap_or(default)
    }

    fn positive(&mut self, key: &'static str, default: f64) -> f64 {
        let v = self.f64(key, default);
        if !(v > 0.0 && v.is_finite()) {
            self.error(key, format!("must be positive, got {v}"));
            return default;
        }
        v
    }

    fn u64(&mut self, key: &'static str, default: u64) -> u64 {
        match self.get(key) {
            None => default,
            Some(Value::Integer(v)) if v >= 0 => v as u64,
            Some(other) => {
                self.error(key, format!("expected a non-negative integer, got {other}"));
                default
            }
        }
    }

    fn usize(&mut self, key: &'static str, default: usize) -> usize {
        self.u64(key, default as u64) as usize
    }

    fn string(&mut self, key: &'static str, default: &str) -> String {
        match self.get(key) {
            None => default.to_string(),
            Some(Value::String(v)) => v,
            Some(other) => {
                self.error(key, format!("expected a string, got {}", other.type_str()));
                default.to_string()
            }
        }
    }

    fn list(&mut self, key: &'static str) -> Option<Vec<Value>> {
        match self.get(key)? {
            Value::Array(a) => Some(a),
            other => {
                self.error(key, format!("expected an array, got {}", other.type_str()));
                None
            }
        }
    }

    fn f64_list(&mut self, key: &'static str, default: &[f64]) -> Vec<f64> {
        let Some(items) = self.list(key) else {
            return default.to_vec();
        };
        let parsed: Option<Vec<f64>> = items.iter().map(as_f64).collect();
        parsed.unwrap_or_else(|| {
            self.error(key, "expected an array of numbers".into());
            default.to_vec()
        })
    }

    fn string_list(&mut self, key: &'static str, default: &[&str]) -> Vec<String> {
        let Some(items) = self.list(key) else {
            return default.iter().map(|s| s.to_string()).collect();
        };
        let parsed: Option<Vec<String>> = items.iter().map(|v| v.as_str().map(str::to_string)).collect();
        parsed.unwrap_or_else(|| {
            self.error(key, "expected an array of strings".into());
            Vec::new()
        })
    }

    fn matrix(&mut self, key: &'static str) -> Vec<Vec<f64>> {
        let Some(rows) = self.list(key) else { return Vec::new() };
        let parsed: Option<Vec<Vec<f64>>> = rows
            .iter()
            .map(|r| r.as_array().and_then(|r| r.iter().map(as_f64).collect()))
            .collect();
        parsed.unwrap_or_else(|| {
            self.error(key, "expected an array of numeric rows".into());
            Vec::new()
        })
    }

    fn mode(&mut self, key: &'static str, default: [i64; 2]) -> [i64; 2] {
        let Some(items) = self.list(key) else { return default };
        let ints: Option<Vec<i64>> = items.iter().map(Value::as_integer).collect();
        match ints.as_deref() {
            Some([a]) => [*a, 0],
            Some([a, b]) => [*a, *b],
            _ => {
                self.error(key, "expected one or two integers".into());
                default
            }
        }
    }

    fn finish(self) -> Vec<String> {
        let known: Vec<&str> = self.known.iter().copied().collect();
        let mut errors = self.errors;
        for key in self.table.keys() {
            if !self.known.contains(key.as_str()) {
                errors.push(unknown(self.name, key, &known));
            }
        }
        errors
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(x) => Some(*x as f64),
        _ => None,
    }
}
