use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Named velocity models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocitySpec {
    /// Two velocities `±1` with equal weights and `F ≡ 1` (Goldstein–Taylor).
    Gt2,
    /// `V = [-1, 1]`, `μ = dv`, `F ≡ 1/2`, `a(v) = v`, sampled by
    /// Gauss–Legendre with the given node count.
    Cont { nodes: usize },
    /// User-supplied quadrature, see [`VelocityQuadrature::custom`].
    Custom,
}

/// Discrete velocity space: nodes, weights, speeds and equilibrium.
///
/// In 2-D the model is the tensor product of the 1-D model with itself.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityQuadrature {
    spec: VelocitySpec,
    dim: usize,
    weights: Vec<f64>,
    speeds: Vec<[f64; 2]>,
    equilibrium: Vec<f64>,
    diffusion: [[f64; 2]; 2],
    nondegeneracy_exponent: Option<f64>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, with the node layout
/// forced odd-symmetric.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

impl VelocityQuadrature {
    pub fn build(spec: VelocitySpec, dim: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidVelocity(format!("unsupported dimension {dim}")));
        }
        let (nodes1, weights1, f1, theta) = match spec {
            VelocitySpec::Gt2 => (vec![-1.0, 1.0], vec![0.5, 0.5], 1.0, None),
            VelocitySpec::Custom => {
                return Err(Error::InvalidVelocity(
                    "custom quadratures are built with VelocityQuadrature::custom".into(),
                ))
            }
            VelocitySpec::Cont { nodes } => {
                if nodes < 2 {
                    return Err(Error::InvalidVelocity(format!(
                        "node count must be at least 2, got {nodes}"
                    )));
                }
                let (x, w) = gauss_legendre(nodes);
                (x, w, 0.5, Some(1.0))
            }
        };

        let mut weights = Vec::new();
        let mut speeds = Vec::new();
        let mut equilibrium = Vec::new();
        if dim == 1 {
            for (x, w) in nodes1.iter().zip(&weights1) {
                weights.push(*w);
                speeds.push([*x, 0.0]);
                equilibrium.push(f1);
            }
        } else {
            for (xa, wa) in nodes1.iter().zip(&weights1) {
                for (xb, wb) in nodes1.iter().zip(&weights1) {
                    weights.push(wa * wb);
                    speeds.push([*xa, *xb]);
                    equilibrium.push(f1 * f1);
                }
            }
        }
        Self::assemble(spec, dim, weights, speeds, equilibrium, theta)
    }

    /// Builds a quadrature from explicit nodes. Weights are renormalized so
    /// that `⟨F⟩ = 1`; the remaining invariants are checked.
    pub fn custom(
        dim: usize,
        weights: Vec<f64>,
        speeds: Vec<[f64; 2]>,
        equilibrium: Vec<f64>,
        nondegeneracy_exponent: Option<f64>,
    ) -> Result<Self> {
        if weights.len() < 2 || weights.len() != speeds.len() || weights.len() != equilibrium.len() {
            return Err(Error::InvalidVelocity(
                "need at least 2 nodes with matching weights, speeds and equilibrium".into(),
            ));
        }
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidVelocity(format!("unsupported dimension {dim}")));
        }
        Self::assemble(
            VelocitySpec::Custom,
            dim,
            weights,
            speeds,
            equilibrium,
            nondegeneracy_exponent,
        )
    }

    fn assemble(
        spec: VelocitySpec,
        dim: usize,
        mut weights: Vec<f64>,
        speeds: Vec<[f64; 2]>,
        equilibrium: Vec<f64>,
        theta: Option<f64>,
    ) -> Result<Self> {
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidVelocity("weights must be positive".into()));
        }
        let mass: f64 = weights.iter().zip(&equilibrium).map(|(w, f)| w * f).sum();
        for w in weights.iter_mut() {
            *w /= mass;
        }

        let mut diffusion = [[0.0; 2]; 2];
        for ((w, a), f) in weights.iter().zip(&speeds).zip(&equilibrium) {
            for p in 0..dim {
                for q in p..dim {
                    diffusion[p][q] += w * a[p] * a[q] * f;
                }
            }
        }
        diffusion[1][0] = diffusion[0][1];
        if dim == 1 {
            diffusion[1][1] = 0.0;
        }

        let quad = Self {
            spec,
            dim,
            weights,
            speeds,
            equilibrium,
            diffusion,
            nondegeneracy_exponent: theta,
        };
        quad.check()?;
        Ok(quad)
    }

    /// Checks `F > 0`, `⟨F⟩ = 1`, null flux and that `K` is SPD.
    pub fn check(&self) -> Result<()> {
        if self.equilibrium.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidVelocity(
                "equilibrium must be positive and bounded".into(),
            ));
        }
        let mass = self.mass_of_equilibrium();
        if (mass - 1.0).abs() > 1e-13 {
            return Err(Error::InvalidVelocity(format!("<F> = {mass} != 1")));
        }
        let flux = self.null_flux();
        if flux.iter().any(|c| c.abs() > 1e-13) {
            return Err(Error::InvalidVelocity(format!("flux <aF> = {flux:?} != 0")));
        }
        let k = self.diffusion;
        let spd = if self.dim == 1 {
            k[0][0] > 1e-14
        } else {
            k[0][0] > 1e-14 && k[0][0] * k[1][1] - k[0][1] * k[1][0] > 1e-14 && k[0][1] == k[1][0]
        };
        if !spd {
            return Err(Error::InvalidVelocity(format!("K = {k:?} is not positive definite")));
        }
        Ok(())
    }

    pub fn spec(&self) -> VelocitySpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn speeds(&self) -> &[[f64; 2]] {
        &self.speeds
    }

    pub fn equilibrium(&self) -> &[f64] {
        &self.equilibrium
    }

    /// `K = Σ w a⊗a F` (2x2, lower block zero in 1-D).
    pub fn diffusion_matrix(&self) -> [[f64; 2]; 2] {
        self.diffusion
    }

    /// Operator norm of `K`.
    pub fn diffusion_norm(&self) -> f64 {
        let k = self.diffusion;
        let tr = k[0][0] + k[1][1];
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt())
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds
            .iter()
            .map(|a| (a[0] * a[0] + a[1] * a[1]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Exponent of the continuum model's non-degeneracy condition, if one
    /// exists. Discrete-velocity models have atoms and carry none.
    pub fn nondegeneracy_exponent(&self) -> Option<f64> {
        self.nondegeneracy_exponent
    }

    pub fn mass_of_equilibrium(&self) -> f64 {
        self.weights.iter().zip(&self.equilibrium).map(|(w, f)| w * f).sum()
    }

    /// `Σ w_k a_k F_k`, summing positive and negative parts separately in
    /// order of magnitude so mirrored layouts cancel exactly.
    pub fn null_flux(&self) -> [f64; 2] {
        let mut flux = [0.0; 2];
        for (c, out) in flux.iter_mut().enumerate() {
            let mut terms: Vec<f64> = self
                .weights
                .iter()
                .zip(&self.speeds)
                .zip(&self.equilibrium)
                .map(|((w, a), f)| w * a[c] * f)
                .collect();
            terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
            let pos: f64 = terms.iter().filter(|t| **t > 0.0).sum();
            let neg: f64 = terms.iter().filter(|t| **t < 0.0).sum();
            *out = pos + neg;
        }
        flux
    }
}
