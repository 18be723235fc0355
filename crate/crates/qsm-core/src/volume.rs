//! Scalar fields on the grid and their Fourier-domain counterparts.
//!
//! Storage is a flat vector in x-fastest order (`k1 + n1*(k2 + n2*k3)`),
//! matching the on-disk volume layout. Volumes are immutable after
//! construction in the sense that every operation returns a new volume.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{QsmError, Result};
use crate::grid::GridSpec;

/// Real scalar field sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealVolume {
    grid: GridSpec,
    data: Vec<f64>,
}

impl RealVolume {
    /// Wraps existing data, checking length and finiteness.
    pub fn from_vec(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(QsmError::InvalidParam(format!(
                "data length {} does not match grid voxel count {}",
                data.len(),
                grid.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(QsmError::NonFinite(pos));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            data: vec![0.0; grid.len()],
            grid,
        }
    }

    /// Builds a volume by evaluating `f` at every index triple in parallel.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn([usize; 3]) -> f64 + Sync,
    {
        let mut data = vec![0.0; grid.len()];
        data.par_iter_mut().enumerate().for_each(|(lin, v)| {
            *v = f(grid.unlinear(lin));
        });
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, index: [usize; 3]) -> f64 {
        self.data[self.grid.linear(index)]
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.par_iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.par_iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .par_iter()
            .map(|v| v.abs())
            .reduce(|| 0.0, f64::max)
    }

    /// `self + scale * other`, used for sums of reconstruction parts.
    pub fn add_scaled(&self, other: &RealVolume, scale: f64) -> Result<RealVolume> {
        if self.grid.dims() != other.grid.dims() {
            return Err(QsmError::GridMismatch(self.grid.dims(), other.grid.dims()));
        }
        let data = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(RealVolume {
            grid: self.grid,
            data,
        })
    }

    /// Consumes the volume, yielding the raw buffer.
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Complex spectrum sampled on the frequency lattice of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVolume {
    grid: GridSpec,
    data: Vec<Complex64>,
}

impl SpectralVolume {
    pub fn from_vec(grid: GridSpec, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(QsmError::InvalidParam(format!(
                "data length {} does not match grid bin count {}",
                data.len(),
                grid.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(QsmError::NonFinite(pos));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
            grid,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn at(&self, index: [usize; 3]) -> Complex64 {
        self.data[self.grid.linear(index)]
    }

    pub fn l2_norm(&self) -> f64 {
        self.data
            .par_iter()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest Hermitian-symmetry defect `|S(k) - conj(S(n-k))|` relative to
    /// the largest bin magnitude. Zero for spectra of real volumes up to
    /// floating rounding.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.dims();
        let scale = self
            .data
            .par_iter()
            .map(|v| v.norm())
            .reduce(|| 0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let defect = (0..self.data.len())
            .into_par_iter()
            .map(|lin| {
                let [k1, k2, k3] = self.grid.unlinear(lin);
                let neg = [
                    (n[0] - k1) % n[0],
                    (n[1] - k2) % n[1],
                    (n[2] - k3) % n[2],
                ];
                (self.data[lin] - self.data[self.grid.linear(neg)].conj()).norm()
            })
            .reduce(|| 0.0, f64::max);
        defect / scale
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub(crate) fn from_parts_unchecked(grid: GridSpec, data: Vec<Complex64>) -> Self {
        Self { grid, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates() {
        let g = GridSpec::cubic(4).unwrap();
        assert!(RealVolume::from_vec(g, vec![0.0; 63]).is_err());
        let mut v = vec![0.0; 64];
        v[10] = f64::NAN;
        assert!(matches!(
            RealVolume::from_vec(g, v),
            Err(QsmError::NonFinite(10))
        ));
    }

    #[test]
    fn from_fn_indexing() {
        let g = GridSpec::new([4, 6, 8], [1.0; 3]).unwrap();
        let v = RealVolume::from_fn(g, |[i, j, k]| (i + 10 * j + 100 * k) as f64);
        assert_eq!(v.at([3, 5, 7]), 753.0);
        assert_eq!(v.data()[g.linear([1, 2, 3])], 321.0);
    }

    #[test]
    fn norms_and_mean() {
        let g = GridSpec::cubic(4).unwrap();
        let v = RealVolume::from_fn(g, |[i, _, _]| if i == 0 { 2.0 } else { 0.0 });
        assert_eq!(v.max_abs(), 2.0);
        // 16 voxels with value 2 -> l2 = sqrt(16*4) = 8, mean = 32/64
        assert!((v.l2_norm() - 8.0).abs() < 1e-12);
        assert!((v.mean() - 0.5).abs() < 1e-12);
    }
}
