//! Ground-truth susceptibility phantom, the dipole forward model, and the
//! point-singularity / noise perturbations applied to the simulated data.
//!
//! Phantom geometry lives in grid-normalized coordinates: voxel `(v1,v2,v3)`
//! sits at `x_i = -1 + (2*v_i + 1)/n_i`, so the volume spans `[-1,1]^3`
//! independent of the physical spacing. Rasterization is voxel-center point
//! sampling by default; the jump discontinuities at ellipsoid boundaries are
//! exactly the conormal singularities the experiments study. An optional 2x
//! supersampling mode averages 8 sub-samples per voxel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{QsmError, Result};
use crate::fft::{apply_multiplier, forward_fft, inverse_fft};
use crate::grid::GridSpec;
use crate::symbols::dipole_d;
use crate::volume::RealVolume;

/// Solid ellipsoid with additive amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    /// Center in grid-normalized coordinates, inside `[-1,1]^3`.
    pub center: [f64; 3],
    /// Semi-axes (normalized units), all positive.
    pub semi_axes: [f64; 3],
    /// Intrinsic Z-Y-X Euler angles in radians (yaw, pitch, roll).
    pub euler: [f64; 3],
    /// Additive susceptibility contribution.
    pub amplitude: f64,
}

impl Ellipsoid {
    fn validate(&self) -> Result<()> {
        if self.semi_axes.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(QsmError::InvalidParam(format!(
                "ellipsoid semi-axes must be positive, got {:?}",
                self.semi_axes
            )));
        }
        if self.center.iter().any(|c| !c.is_finite())
            || self.euler.iter().any(|c| !c.is_finite())
            || !self.amplitude.is_finite()
        {
            return Err(QsmError::InvalidParam("ellipsoid has non-finite fields".into()));
        }
        Ok(())
    }
}

/// Precomputed world-to-body rotation for fast membership tests.
struct BakedEllipsoid {
    center: [f64; 3],
    inv_axes_sq: [f64; 3],
    // rows of R^T where R = Rz(yaw) * Ry(pitch) * Rx(roll)
    rows: [[f64; 3]; 3],
    amplitude: f64,
}

impl BakedEllipsoid {
    fn new(e: &Ellipsoid) -> Self {
        let (cy, sy) = (e.euler[0].cos(), e.euler[0].sin());
        let (cp, sp) = (e.euler[1].cos(), e.euler[1].sin());
        let (cr, sr) = (e.euler[2].cos(), e.euler[2].sin());
        // R = Rz * Ry * Rx; rows of R^T are columns of R
        let r = [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ];
        let rows = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        Self {
            center: e.center,
            inv_axes_sq: [
                1.0 / (e.semi_axes[0] * e.semi_axes[0]),
                1.0 / (e.semi_axes[1] * e.semi_axes[1]),
                1.0 / (e.semi_axes[2] * e.semi_axes[2]),
            ],
            rows,
            amplitude: e.amplitude,
        }
    }

    #[inline]
    fn contains(&self, x: [f64; 3]) -> bool {
        let d = [
            x[0] - self.center[0],
            x[1] - self.center[1],
            x[2] - self.center[2],
        ];
        let mut q = 0.0;
        for i in 0..3 {
            let u = self.rows[i][0] * d[0] + self.rows[i][1] * d[1] + self.rows[i][2] * d[2];
            q += u * u * self.inv_axes_sq[i];
        }
        q <= 1.0
    }
}

/// Ordered union of ellipsoids; amplitudes sum where they overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub ellipsoids: Vec<Ellipsoid>,
}

impl PhantomSpec {
    pub fn new(ellipsoids: Vec<Ellipsoid>) -> Result<Self> {
        if ellipsoids.is_empty() {
            return Err(QsmError::EmptyPhantom);
        }
        for e in &ellipsoids {
            e.validate()?;
        }
        Ok(Self { ellipsoids })
    }
}

/// Standard 10-ellipsoid 3-D Shepp-Logan parameter set (modified amplitudes),
/// already inside the display window `[-0.3, 1]`. Ordering follows the
/// classic table: (amplitude, a, b, c, x0, y0, z0, yaw-about-z in degrees).
pub fn shepp_logan_3d() -> PhantomSpec {
    const TABLE: [(f64, f64, f64, f64, f64, f64, f64, f64); 10] = [
        (1.0, 0.6900, 0.920, 0.810, 0.0, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.780, 0.0, -0.0184, 0.0, 0.0),
        (-0.2, 0.1100, 0.310, 0.220, 0.22, 0.0, 0.0, -18.0),
        (-0.2, 0.1600, 0.410, 0.280, -0.22, 0.0, 0.0, 18.0),
        (0.1, 0.2100, 0.250, 0.410, 0.0, 0.35, -0.15, 0.0),
        (0.1, 0.0460, 0.046, 0.050, 0.0, 0.10, 0.25, 0.0),
        (0.1, 0.0460, 0.046, 0.050, 0.0, -0.10, 0.25, 0.0),
        (0.1, 0.0460, 0.023, 0.050, -0.08, -0.605, 0.0, 0.0),
        (0.1, 0.0230, 0.023, 0.020, 0.0, -0.606, 0.0, 0.0),
        (0.1, 0.0230, 0.046, 0.020, 0.06, -0.605, 0.0, 0.0),
    ];
    let ellipsoids = TABLE
        .iter()
        .map(|&(amp, a, b, c, x0, y0, z0, yaw_deg)| Ellipsoid {
            center: [x0, y0, z0],
            semi_axes: [a, b, c],
            euler: [yaw_deg.to_radians(), 0.0, 0.0],
            amplitude: amp,
        })
        .collect();
    PhantomSpec { ellipsoids }
}

/// Normalized coordinate of a voxel center along one axis.
#[inline]
pub fn voxel_center(n: usize, v: usize) -> f64 {
    -1.0 + (2.0 * v as f64 + 1.0) / n as f64
}

/// Rasterization options.
#[derive(Debug, Clone, Copy, Default)]
pub struct RasterOptions {
    /// Average 2x2x2 sub-samples per voxel instead of point sampling.
    pub supersample_2x: bool,
}

/// Rasterizes the phantom onto a grid: each voxel gets the sum of amplitudes
/// of the ellipsoids containing its center.
pub fn rasterize_phantom(spec: &PhantomSpec, grid: &GridSpec) -> Result<RealVolume> {
    rasterize_phantom_with(spec, grid, RasterOptions::default())
}

pub fn rasterize_phantom_with(
    spec: &PhantomSpec,
    grid: &GridSpec,
    opts: RasterOptions,
) -> Result<RealVolume> {
    if spec.ellipsoids.is_empty() {
        return Err(QsmError::EmptyPhantom);
    }
    for e in &spec.ellipsoids {
        e.validate()?;
    }
    let baked: Vec<BakedEllipsoid> = spec.ellipsoids.iter().map(BakedEllipsoid::new).collect();
    let n = grid.dims();
    let sample = |x: [f64; 3]| -> f64 {
        baked
            .iter()
            .filter(|b| b.contains(x))
            .map(|b| b.amplitude)
            .sum()
    };
    let vol = RealVolume::from_fn(*grid, |[v1, v2, v3]| {
        let c = [
            voxel_center(n[0], v1),
            voxel_center(n[1], v2),
            voxel_center(n[2], v3),
        ];
        if opts.supersample_2x {
            let h = [0.5 / n[0] as f64, 0.5 / n[1] as f64, 0.5 / n[2] as f64];
            let mut acc = 0.0;
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for sz in [-1.0, 1.0] {
                        acc += sample([c[0] + sx * h[0], c[1] + sy * h[1], c[2] + sz * h[2]]);
                    }
                }
            }
            acc / 8.0
        } else {
            sample(c)
        }
    });
    Ok(vol)
}

/// Applies the dipole forward model `psi = IFFT(D * FFT(chi))`.
///
/// `D` is even and real, so the output is real; `D(0) = 0` makes it zero-mean.
pub fn forward_model(chi: &RealVolume) -> Result<RealVolume> {
    let spectrum = forward_fft(chi)?;
    let filtered = apply_multiplier(&spectrum, dipole_d)?;
    inverse_fft(&filtered)
}

/// Point spikes and optional seeded white Gaussian noise added to the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    /// `(voxel index, additive amplitude)` pairs.
    pub spikes: Vec<([usize; 3], f64)>,
    /// Standard deviation of white Gaussian noise; 0 disables it.
    pub noise_sigma: f64,
    /// RNG seed for the noise.
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn spikes_only(spikes: Vec<([usize; 3], f64)>) -> Self {
        Self {
            spikes,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Adds the spikes and noise of `pert` to a copy of `psi`. Deterministic for
/// a fixed seed.
pub fn perturb(psi: &RealVolume, pert: &PerturbationSpec) -> Result<RealVolume> {
    let grid = *psi.grid();
    for &(index, amp) in &pert.spikes {
        if !grid.contains(index) {
            return Err(QsmError::SpikeOutOfRange {
                index,
                dims: grid.dims(),
            });
        }
        if !amp.is_finite() {
            return Err(QsmError::InvalidParam(format!(
                "spike amplitude at {index:?} is not finite"
            )));
        }
    }
    if !(pert.noise_sigma >= 0.0) || !pert.noise_sigma.is_finite() {
        return Err(QsmError::InvalidParam(format!(
            "noise sigma must be finite and >= 0, got {}",
            pert.noise_sigma
        )));
    }

    let mut data = psi.data().to_vec();
    if pert.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(pert.seed);
        let normal = Normal::new(0.0, pert.noise_sigma)
            .map_err(|e| QsmError::InvalidParam(format!("noise distribution: {e}")))?;
        // sequential draw keeps the stream independent of thread count
        for v in data.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for &(index, amp) in &pert.spikes {
        data[grid.linear(index)] += amp;
    }
    RealVolume::from_vec(grid, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::forward_fft;

    fn ball(center: [f64; 3], radius: f64, amplitude: f64) -> Ellipsoid {
        Ellipsoid {
            center,
            semi_axes: [radius; 3],
            euler: [0.0; 3],
            amplitude,
        }
    }

    #[test]
    fn single_ball_rasterizes_inside_outside() {
        let g = GridSpec::cubic(32).unwrap();
        let spec = PhantomSpec::new(vec![ball([0.0; 3], 0.5, 1.0)]).unwrap();
        let v = rasterize_phantom(&spec, &g).unwrap();
        assert_eq!(v.at([16, 16, 16]), 1.0);
        assert_eq!(v.at([0, 0, 0]), 0.0);
        // voxel fraction ~ ball volume fraction (4/3 pi r^3)/8 with r = 0.5
        let frac = v.data().iter().filter(|&&x| x != 0.0).count() as f64 / g.len() as f64;
        let expect = 4.0 / 3.0 * std::f64::consts::PI * 0.125 / 8.0;
        assert!((frac - expect).abs() < 0.2 * expect, "{frac} vs {expect}");
    }

    #[test]
    fn overlap_adds_amplitudes() {
        let g = GridSpec::cubic(32).unwrap();
        let spec = PhantomSpec::new(vec![
            ball([-0.2, 0.0, 0.0], 0.4, 1.0),
            ball([0.2, 0.0, 0.0], 0.4, -0.3),
        ])
        .unwrap();
        let v = rasterize_phantom(&spec, &g).unwrap();
        // center of the overlap region
        let mid = v.at([16, 16, 16]);
        assert!((mid - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rotation_moves_long_axis() {
        let g = GridSpec::cubic(64).unwrap();
        // long axis along x, then yawed 90 degrees -> long axis along y
        let e = Ellipsoid {
            center: [0.0; 3],
            semi_axes: [0.8, 0.1, 0.1],
            euler: [std::f64::consts::FRAC_PI_2, 0.0, 0.0],
            amplitude: 1.0,
        };
        let v = rasterize_phantom(&PhantomSpec::new(vec![e]).unwrap(), &g).unwrap();
        let along_y = v.at([32, 54, 32]); // y ~ 0.7 inside rotated axis
        let along_x = v.at([54, 32, 32]);
        assert_eq!(along_y, 1.0);
        assert_eq!(along_x, 0.0);
    }

    #[test]
    fn default_phantom_volume_fraction() {
        let g = GridSpec::cubic(64).unwrap();
        let v = rasterize_phantom(&shepp_logan_3d(), &g).unwrap();
        let frac = v.data().iter().filter(|&&x| x != 0.0).count() as f64 / g.len() as f64;
        assert!(frac > 0.1 && frac < 0.6, "support fraction {frac}");
        // stays within the display window
        assert!(v.data().iter().all(|&x| (-0.3..=1.0).contains(&x)));
    }

    #[test]
    fn supersampling_softens_boundary() {
        let g = GridSpec::cubic(32).unwrap();
        let spec = PhantomSpec::new(vec![ball([0.0; 3], 0.5, 1.0)]).unwrap();
        let sharp = rasterize_phantom(&spec, &g).unwrap();
        let soft = rasterize_phantom_with(
            &spec,
            &g,
            RasterOptions {
                supersample_2x: true,
            },
        )
        .unwrap();
        let has_partial = soft
            .data()
            .iter()
            .any(|&x| x > 0.0 && x < 1.0);
        assert!(has_partial);
        assert!(sharp.data().iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn empty_phantom_is_error() {
        assert!(matches!(
            PhantomSpec::new(vec![]),
            Err(QsmError::EmptyPhantom)
        ));
    }

    #[test]
    fn forward_of_impulse_is_dipole_response() {
        let g = GridSpec::cubic(16).unwrap();
        let chi = RealVolume::from_fn(g, |idx| if idx == [0, 0, 0] { 1.0 } else { 0.0 });
        let psi = forward_model(&chi).unwrap();
        let spec = forward_fft(&psi).unwrap();
        let f = g.frequencies();
        for lin in 0..g.len() {
            let d = dipole_d(f.xi_linear(lin));
            let got = spec.data()[lin];
            assert!(
                (got.re - d).abs() < 1e-12 && got.im.abs() < 1e-12,
                "at {lin}: {got} vs {d}"
            );
        }
    }

    #[test]
    fn forward_of_constant_vanishes() {
        let g = GridSpec::cubic(16).unwrap();
        let chi = RealVolume::from_fn(g, |_| 0.8);
        let psi = forward_model(&chi).unwrap();
        assert!(psi.max_abs() < 1e-12);
    }

    #[test]
    fn forward_is_linear_and_zero_mean() {
        let g = GridSpec::cubic(16).unwrap();
        let a = rasterize_phantom(&PhantomSpec::new(vec![ball([0.2, 0.0, 0.0], 0.3, 1.0)]).unwrap(), &g)
            .unwrap();
        let b = rasterize_phantom(&PhantomSpec::new(vec![ball([-0.2, 0.1, 0.0], 0.4, 0.5)]).unwrap(), &g)
            .unwrap();
        let combo = a.add_scaled(&b, -2.0).unwrap();
        let psi_combo = forward_model(&combo).unwrap();
        let expect = forward_model(&a)
            .unwrap()
            .add_scaled(&forward_model(&b).unwrap(), -2.0)
            .unwrap();
        let diff: f64 = psi_combo
            .data()
            .iter()
            .zip(expect.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-12 * expect.l2_norm().max(1e-300));
        assert!(psi_combo.mean().abs() < 1e-12 * psi_combo.max_abs());
    }

    #[test]
    fn perturb_examples() {
        let g = GridSpec::cubic(8).unwrap();
        let psi = RealVolume::from_fn(g, |[i, j, k]| (i + j + k) as f64 * 0.01);
        // empty spec -> identity
        let same = perturb(&psi, &PerturbationSpec::spikes_only(vec![])).unwrap();
        assert_eq!(psi.data(), same.data());
        // one spike changes exactly one voxel
        let spiked = perturb(
            &psi,
            &PerturbationSpec::spikes_only(vec![([2, 3, 4], 7.0)]),
        )
        .unwrap();
        let mut changed = 0;
        for lin in 0..g.len() {
            if spiked.data()[lin] != psi.data()[lin] {
                changed += 1;
                assert_eq!(g.unlinear(lin), [2, 3, 4]);
                assert_eq!(spiked.data()[lin] - psi.data()[lin], 7.0);
            }
        }
        assert_eq!(changed, 1);
        // out of range
        assert!(matches!(
            perturb(&psi, &PerturbationSpec::spikes_only(vec![([8, 0, 0], 1.0)])),
            Err(QsmError::SpikeOutOfRange { .. })
        ));
    }

    #[test]
    fn noise_is_reproducible_bitwise() {
        let g = GridSpec::cubic(8).unwrap();
        let psi = RealVolume::zeros(g);
        let pert = PerturbationSpec {
            spikes: vec![],
            noise_sigma: 0.1,
            seed: 1234,
        };
        let a = perturb(&psi, &pert).unwrap();
        let b = perturb(&psi, &pert).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().any(|&x| x != 0.0));
        let other = perturb(
            &psi,
            &PerturbationSpec {
                seed: 99,
                ..pert.clone()
            },
        )
        .unwrap();
        assert_ne!(a.data(), other.data());
    }

    #[test]
    fn cone_supported_spectrum_yields_small_field() {
        // if chi-hat lives where |D| < delta, then ||psi|| <= delta * ||chi||
        let g = GridSpec::cubic(16).unwrap();
        let delta = 0.05;
        // build a real volume whose spectrum is masked onto {|D| < delta}:
        // start from a random volume, FFT, mask, IFFT
        let chi0 = {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
            let data: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            RealVolume::from_vec(g, data).unwrap()
        };
        let masked = apply_multiplier(&forward_fft(&chi0).unwrap(), |xi| {
            if dipole_d(xi).abs() < delta {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let chi = inverse_fft(&masked).unwrap();
        let psi = forward_model(&chi).unwrap();
        assert!(psi.l2_norm() <= delta * chi.l2_norm() * (1.0 + 1e-10));
    }
}
