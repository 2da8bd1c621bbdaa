//! Fourier transforms on the unit torus.
//!
//! Coefficients are normalized so that `c_ξ = n^{-N} Σ_x u(x) e^{-2πi ξ·x}`,
//! which makes Parseval read `‖u‖²_{L²} = Σ_ξ |c_ξ|²` on the unit torus.
//! Real-valued results are recovered by taking the real part of the inverse
//! transform; for multipliers that are Hermitian this only touches the
//! Nyquist modes.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::model::TorusGrid;

#[derive(Clone)]
pub struct Spectral {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Integer wavevector of each flat index (second entry is 0 in 1-D).
    freqs: Vec<[i64; 2]>,
    /// Per axis: is this index on the Nyquist line of that axis.
    nyquist: Vec<[bool; 2]>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

fn signed_freq(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Spectral {
    pub fn new(grid: TorusGrid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = grid.len();
        let mut freqs = Vec::with_capacity(len);
        let mut nyquist = Vec::with_capacity(len);
        for idx in 0..len {
            let (i0, i1) = grid.split(idx);
            let f0 = signed_freq(i0, n);
            let f1 = if grid.dim() == 2 { signed_freq(i1, n) } else { 0 };
            freqs.push([f0, f1]);
            nyquist.push([
                n.is_multiple_of(2) && i0 == n / 2,
                grid.dim() == 2 && n.is_multiple_of(2) && i1 == n / 2,
            ]);
        }
        Self {
            grid,
            fwd,
            inv,
            freqs,
            nyquist,
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// Integer wavevector at flat spectral index `idx`.
    pub fn freq(&self, idx: usize) -> [i64; 2] {
        self.freqs[idx]
    }

    pub fn is_nyquist(&self, idx: usize) -> bool {
        let ny = self.nyquist[idx];
        ny[0] || ny[1]
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        if self.grid.dim() == 1 {
            plan.process(buf);
            return;
        }
        // rows (contiguous in the second index)
        for row in buf.chunks_exact_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = buf[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                buf[i * n + j] = col[i];
            }
        }
    }

    /// Normalized Fourier coefficients of a real field.
    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.grid.len());
        self.transform(buf, &self.fwd);
        let scale = 1.0 / self.grid.len() as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    /// Inverse transform of normalized coefficients, keeping the real part.
    pub fn inverse_real(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut coeffs, &self.inv);
        coeffs.into_iter().map(|c| c.re).collect()
    }

    pub fn inverse_real_into(&self, coeffs: &mut [Complex64], out: &mut [f64]) {
        self.transform(coeffs, &self.inv);
        for (o, c) in out.iter_mut().zip(coeffs.iter()) {
            *o = c.re;
        }
    }

    /// Applies a Fourier multiplier `m(ξ)` and returns the real field.
    pub fn apply_multiplier<M>(&self, field: &[f64], mult: M) -> Vec<f64>
    where
        M: Fn(usize, [f64; 2]) -> Complex64,
    {
        let mut coeffs = self.forward(field);
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let f = self.freqs[idx];
            *c *= mult(idx, [f[0] as f64, f[1] as f64]);
        }
        self.inverse_real(coeffs)
    }

    /// Spectral partial derivative along `axis`; the Nyquist line of that
    /// axis is zeroed.
    pub fn derivative(&self, field: &[f64], axis: usize) -> Vec<f64> {
        self.apply_multiplier(field, |idx, xi| {
            if self.nyquist[idx][axis] {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, 2.0 * PI * xi[axis])
            }
        })
    }

    /// Gradient, one component per spatial dimension.
    pub fn gradient(&self, field: &[f64]) -> Vec<Vec<f64>> {
        (0..self.grid.dim()).map(|axis| self.derivative(field, axis)).collect()
    }

    /// `div(K ∇u)` for a constant symmetric matrix `K` (row-major 2x2; only
    /// the leading entry is used in 1-D).
    pub fn diffusion(&self, field: &[f64], k: &[[f64; 2]; 2]) -> Vec<f64> {
        let dim = self.grid.dim();
        self.apply_multiplier(field, |_, xi| {
            let mut q = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    q += xi[a] * k[a][b] * xi[b];
                }
            }
            Complex64::new(-4.0 * PI * PI * q, 0.0)
        })
    }

    pub fn laplacian(&self, field: &[f64]) -> Vec<f64> {
        self.diffusion(field, &[[1.0, 0.0], [0.0, 1.0]])
    }

    /// Phase table `exp(-2πi ξ·d)` for a fixed displacement `d`.
    pub fn shift_phases(&self, displacement: [f64; 2]) -> Vec<Complex64> {
        self.freqs
            .iter()
            .map(|f| {
                let arg = -2.0 * PI * (f[0] as f64 * displacement[0] + f[1] as f64 * displacement[1]);
                Complex64::from_polar(1.0, arg)
            })
            .collect()
    }

    /// Exact translation `u(x) -> u(x - d)` of the trigonometric interpolant,
    /// using a precomputed phase table.
    pub fn shift_with(&self, field: &mut [f64], phases: &[Complex64], buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(field.iter().map(|&x| Complex64::new(x, 0.0)));
        self.forward_in_place(buf);
        for (c, p) in buf.iter_mut().zip(phases) {
            *c *= p;
        }
        self.inverse_real_into(buf, field);
    }

    pub fn shift(&self, field: &[f64], displacement: [f64; 2]) -> Vec<f64> {
        let phases = self.shift_phases(displacement);
        let mut out = field.to_vec();
        let mut buf = Vec::with_capacity(field.len());
        self.shift_with(&mut out, &phases, &mut buf);
        out
    }

    /// `Σ_ξ (1 + 4π²|ξ|²)^s |c_ξ|²`.
    pub fn hs_norm_sq(&self, field: &[f64], s: f64) -> f64 {
        let coeffs = self.forward(field);
        coeffs
            .iter()
            .zip(&self.freqs)
            .map(|(c, f)| {
                let xi2 = (f[0] * f[0] + f[1] * f[1]) as f64;
                (1.0 + 4.0 * PI * PI * xi2).powf(s) * c.norm_sqr()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(n, 1).unwrap()
    }

    #[test]
    fn single_mode_derivative_and_laplacian() {
        let g = grid1(32);
        let sp = Spectral::new(g);
        let u: Vec<f64> = g.points().map(|x| (2.0 * PI * 3.0 * x[0]).cos()).collect();
        let du = sp.derivative(&u, 0);
        let lap = sp.laplacian(&u);
        for (i, x) in g.points().enumerate() {
            let exact_d = -6.0 * PI * (6.0 * PI * x[0]).sin();
            let exact_l = -36.0 * PI * PI * u[i];
            assert!((du[i] - exact_d).abs() < 1e-11);
            assert!((lap[i] - exact_l).abs() < 1e-10);
        }
    }

    #[test]
    fn parseval_and_hs() {
        let g = grid1(64);
        let sp = Spectral::new(g);
        let u: Vec<f64> = g.points().map(|x| (2.0 * PI * x[0]).cos()).collect();
        assert!((sp.hs_norm_sq(&u, 0.0) - 0.5).abs() < 1e-14);
        let expect = 0.5 * (1.0 + 4.0 * PI * PI).powf(0.3);
        assert!((sp.hs_norm_sq(&u, 0.3) - expect).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_shift() {
        let g = TorusGrid::new(16, 2).unwrap();
        let sp = Spectral::new(g);
        let u: Vec<f64> = g.points().map(|x| (2.0 * PI * (x[0] + 2.0 * x[1])).cos()).collect();
        let d = [0.1, -0.05];
        let shifted = sp.shift(&u, d);
        for (i, x) in g.points().enumerate() {
            let exact = (2.0 * PI * ((x[0] - d[0]) + 2.0 * (x[1] - d[1]))).cos();
            assert!((shifted[i] - exact).abs() < 1e-12);
        }
    }
}
