use crate::error::{Error, Result};

/// Uniform grid on the unit torus `T^N`, `N ∈ {1, 2}`.
///
/// Points are `x_i = i / n` per axis; in 2-D the flat index is `i0 * n + i1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
    dim: usize,
}

impl TorusGrid {
    pub fn new(n: usize, dim: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per dimension must be a power of two >= 2, got {n}"
            )));
        }
        Ok(Self { n, dim })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of grid points `n^N`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `Δx^N`, the rectangle-rule weight.
    pub fn cell_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn split(&self, idx: usize) -> (usize, usize) {
        if self.dim == 1 {
            (idx, 0)
        } else {
            (idx / self.n, idx % self.n)
        }
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let (i0, i1) = self.split(idx);
        let h = self.spacing();
        if self.dim == 1 {
            [i0 as f64 * h, 0.0]
        } else {
            [i0 as f64 * h, i1 as f64 * h]
        }
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Flat index of the periodic neighbour one step forward along `axis`.
    pub fn forward_neighbor(&self, idx: usize, axis: usize) -> usize {
        let (i0, i1) = self.split(idx);
        match (self.dim, axis) {
            (1, _) => (i0 + 1) % self.n,
            (_, 0) => ((i0 + 1) % self.n) * self.n + i1,
            _ => i0 * self.n + (i1 + 1) % self.n,
        }
    }

    pub fn integrate(&self, field: &[f64]) -> f64 {
        self.cell_volume() * field.iter().sum::<f64>()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn l2_norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// Discrete `W^{1,∞}` norm: max of the sup norm and the sup of forward
    /// difference quotients.
    pub fn w1inf_norm(&self, a: &[f64]) -> f64 {
        let sup = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut grad = 0.0f64;
        for idx in 0..self.len() {
            for axis in 0..self.dim {
                let j = self.forward_neighbor(idx, axis);
                grad = grad.max(((a[j] - a[idx]) / self.spacing()).abs());
            }
        }
        sup.max(grad)
    }
}
