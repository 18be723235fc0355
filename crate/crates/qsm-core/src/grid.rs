//! Sampling grid and its discrete frequency coordinates.
//!
//! The grid is a cubic lattice of `n1 x n2 x n3` voxels with per-axis spacing
//! `delta_i`. Frequencies are angular DFT frequencies with a signed wrap:
//! DFT index `k` maps to `2*pi*wrap(k) / (n*delta)` where `wrap` sends `k`
//! into `[-n/2, n/2)`. The Nyquist index `n/2` lands on the negative side,
//! which keeps every even symbol exactly even on the grid.

use crate::error::{QsmError, Result};

/// Cubic sampling lattice: voxel counts and spacings per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: [usize; 3],
    delta: [f64; 3],
}

impl GridSpec {
    /// Creates a grid, enforcing even axis sizes `>= 4` and positive spacing.
    pub fn new(n: [usize; 3], delta: [f64; 3]) -> Result<Self> {
        for (axis, &ni) in n.iter().enumerate() {
            if ni < 4 {
                return Err(QsmError::InvalidGrid(format!(
                    "axis {axis} has {ni} voxels, need at least 4"
                )));
            }
            if ni % 2 != 0 {
                return Err(QsmError::InvalidGrid(format!(
                    "axis {axis} has odd size {ni}; only even sizes are supported"
                )));
            }
        }
        for (axis, &d) in delta.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(QsmError::InvalidGrid(format!(
                    "axis {axis} spacing {d} must be positive and finite"
                )));
            }
        }
        Ok(Self { n, delta })
    }

    /// Isotropic grid with unit spacing.
    pub fn cubic(n: usize) -> Result<Self> {
        Self::new([n, n, n], [1.0, 1.0, 1.0])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.n
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.delta
    }

    /// Total voxel count `n1*n2*n3`.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        false // n_i >= 4 by construction
    }

    /// Linear index with x fastest: `k1 + n1*(k2 + n2*k3)`.
    pub fn linear(&self, index: [usize; 3]) -> usize {
        index[0] + self.n[0] * (index[1] + self.n[1] * index[2])
    }

    /// Inverse of [`GridSpec::linear`].
    pub fn unlinear(&self, lin: usize) -> [usize; 3] {
        let k1 = lin % self.n[0];
        let rest = lin / self.n[0];
        [k1, rest % self.n[1], rest / self.n[1]]
    }

    pub fn contains(&self, index: [usize; 3]) -> bool {
        index[0] < self.n[0] && index[1] < self.n[1] && index[2] < self.n[2]
    }

    /// The frequency lattice attached to this grid.
    pub fn frequencies(&self) -> FrequencyGrid {
        FrequencyGrid { grid: *self }
    }

    /// Signed wrap of a DFT index into `[-n/2, n/2)`.
    pub fn wrap_index(n: usize, k: usize) -> i64 {
        let k = k as i64;
        let n = n as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }
}

/// Discrete angular-frequency coordinates derived from a [`GridSpec`].
#[derive(Debug, Clone, Copy)]
pub struct FrequencyGrid {
    grid: GridSpec,
}

impl FrequencyGrid {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Angular frequency vector at a DFT index triple (no bounds check).
    pub fn xi(&self, index: [usize; 3]) -> [f64; 3] {
        let n = self.grid.n;
        let d = self.grid.delta;
        let mut out = [0.0; 3];
        for i in 0..3 {
            let w = GridSpec::wrap_index(n[i], index[i]);
            out[i] = 2.0 * std::f64::consts::PI * (w as f64) / (n[i] as f64 * d[i]);
        }
        out
    }

    /// Frequency at a linear (x-fastest) index.
    pub fn xi_linear(&self, lin: usize) -> [f64; 3] {
        self.xi(self.grid.unlinear(lin))
    }

    /// Largest `|xi|` on the lattice: the norm of the per-axis Nyquist
    /// frequencies `pi/delta_i` (wrap sends `n/2` to `-n/2`).
    pub fn max_norm(&self) -> f64 {
        let d = self.grid.delta;
        (0..3)
            .map(|i| (std::f64::consts::PI / d[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest nonzero frequency step along any axis, `min_i 2*pi/(n_i*delta_i)`.
    pub fn min_step(&self) -> f64 {
        let n = self.grid.n;
        let d = self.grid.delta;
        (0..3)
            .map(|i| 2.0 * std::f64::consts::PI / (n[i] as f64 * d[i]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Signed angular frequency at a DFT index triple, with bounds checking.
pub fn frequency_at(grid: &GridSpec, index: [usize; 3]) -> Result<[f64; 3]> {
    if !grid.contains(index) {
        return Err(QsmError::IndexOutOfRange {
            index,
            dims: grid.dims(),
        });
    }
    Ok(grid.frequencies().xi(index))
}
