use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::NoiseModel;
use crate::error::{Error, Result};

/// A sampled path of `m^ε(t) = m(t/ε²)` on `[0, T]`.
///
/// `jump_times[0] = 0` and the state on `[jump_times[k], jump_times[k+1])`
/// is `states[k]`; the last segment runs to `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    epsilon: f64,
    horizon: f64,
    jump_times: Vec<f64>,
    states: Vec<usize>,
}

impl NoisePath {
    /// A path that stays in `state` for the whole horizon.
    pub fn constant(state: usize, epsilon: f64, horizon: f64) -> Self {
        Self {
            epsilon,
            horizon,
            jump_times: vec![0.0],
            states: vec![state],
        }
    }

    /// Builds a path from explicit jump times (first must be 0) and states.
    pub fn from_jumps(epsilon: f64, horizon: f64, jump_times: Vec<f64>, states: Vec<usize>) -> Result<Self> {
        if jump_times.len() != states.len() || jump_times.is_empty() {
            return Err(Error::InvalidNoise(
                "jump times and states must have equal, nonzero length".into(),
            ));
        }
        if jump_times[0] != 0.0 {
            return Err(Error::InvalidNoise("first segment must start at t = 0".into()));
        }
        if jump_times.windows(2).any(|w| w[1] <= w[0]) || jump_times.last().is_some_and(|&t| t > horizon) {
            return Err(Error::InvalidNoise(
                "jump times must be strictly increasing within [0, T]".into(),
            ));
        }
        Ok(Self {
            epsilon,
            horizon,
            jump_times,
            states,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len() - 1
    }

    fn segment(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        self.states[self.segment(t)]
    }

    /// Time spent in each state during `[a, b]`, accumulated into `out`
    /// (cleared first).
    pub fn occupation_into(&self, a: f64, b: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if b <= a {
            return;
        }
        let mut k = self.segment(a);
        let mut t = a;
        while t < b {
            let end = self.jump_times.get(k + 1).copied().unwrap_or(f64::INFINITY).min(b);
            out[self.states[k]] += end - t;
            t = end;
            k += 1;
        }
    }

    pub fn occupation(&self, a: f64, b: f64, n_states: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_states];
        self.occupation_into(a, b, &mut out);
        out
    }

    /// Completed holding times (the censored first and last segments are
    /// excluded).
    pub fn holding_times(&self) -> Vec<f64> {
        self.jump_times.windows(2).skip(1).map(|w| w[1] - w[0]).collect()
    }
}

/// Samples `m^ε` on `[0, T]`: initial state from `ν`, holding time in state
/// `i` exponential with rate `-M_ii / ε²`, jumps proportional to `M_ij`.
pub fn sample_path<R: Rng + ?Sized>(model: &NoiseModel, epsilon: f64, horizon: f64, rng: &mut R) -> Result<NoisePath> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::OutOfRange(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::OutOfRange(format!("horizon must be positive, got {horizon}")));
    }
    let nu = model.stationary();
    let m = model.generator();
    let mut state = pick(nu.iter().copied(), 1.0, rng);
    let mut t = 0.0;
    let mut jump_times = vec![0.0];
    let mut states = vec![state];
    let scale = 1.0 / (epsilon * epsilon);
    loop {
        let rate = model.exit_rate(state) * scale;
        if rate <= 0.0 {
            break;
        }
        let hold: f64 = Exp::new(rate)
            .map_err(|e| Error::InvalidNoise(e.to_string()))?
            .sample(rng);
        t += hold;
        if t >= horizon {
            break;
        }
        let row = (0..nu.len()).map(|j| if j == state { 0.0 } else { m[(state, j)] });
        state = pick(row, model.exit_rate(state), rng);
        jump_times.push(t);
        states.push(state);
    }
    Ok(NoisePath {
        epsilon,
        horizon,
        jump_times,
        states,
    })
}

/// [`sample_path`] with a fresh `ChaCha8` generator.
pub fn sample_path_seeded(model: &NoiseModel, epsilon: f64, horizon: f64, seed: u64) -> Result<NoisePath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_path(model, epsilon, horizon, &mut rng)
}

fn pick<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, total: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}
