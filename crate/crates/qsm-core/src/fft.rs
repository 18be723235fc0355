//! Forward/inverse 3-D FFT and scalar Fourier-multiplier application.
//!
//! Convention: unnormalized forward DFT, inverse carries the `1/(n1*n2*n3)`
//! factor. The pair round-trips to relative 1e-12 and satisfies
//! `||fft(v)||^2 = N * ||v||^2`.
//!
//! The inverse transform of a symbol-filtered spectrum should be real up to
//! rounding; the imaginary residue is measured and discarded when below a
//! tolerance, otherwise surfaced as a symmetry-violation error.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{QsmError, Result};
use crate::volume::{RealVolume, SpectralVolume};

/// Default relative imaginary-residue tolerance for [`inverse_fft`].
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .expect("FFT planner lock poisoned");
    planner.plan_fft(len, direction)
}

/// In-place complex 3-D FFT over a flat x-fastest buffer.
fn fft3_in_place(data: &mut [Complex64], dims: [usize; 3], direction: FftDirection) {
    let [n1, n2, n3] = dims;

    // axis 0: lanes are contiguous
    let fft = plan(n1, direction);
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(n1).for_each_init(
        || vec![Complex64::default(); scratch_len],
        |scratch, lane| fft.process_with_scratch(lane, scratch),
    );

    // axis 1: stride n1, one lane per (k1, k3) pair
    let fft = plan(n2, direction);
    let scratch_len = fft.get_inplace_scratch_len();
    let plane = n1 * n2;
    // SAFETY-free approach: split into z-planes, each plane holds n1 lanes of stride n1.
    data.par_chunks_mut(plane).for_each_init(
        || {
            (
                vec![Complex64::default(); n2],
                vec![Complex64::default(); scratch_len],
            )
        },
        |(lane, scratch), zplane| {
            for k1 in 0..n1 {
                for k2 in 0..n2 {
                    lane[k2] = zplane[k1 + n1 * k2];
                }
                fft.process_with_scratch(lane, scratch);
                for k2 in 0..n2 {
                    zplane[k1 + n1 * k2] = lane[k2];
                }
            }
        },
    );

    // axis 2: stride n1*n2, one lane per (k1, k2) pair; parallelize over rows of x
    let fft = plan(n3, direction);
    let scratch_len = fft.get_inplace_scratch_len();
    let rows: Vec<usize> = (0..n1 * n2).collect();
    // Lanes along z do not overlap for distinct (k1,k2); gather/scatter through
    // a raw pointer wrapper keeps this a single pass without restructuring.
    struct Ptr(*mut Complex64);
    unsafe impl Send for Ptr {}
    unsafe impl Sync for Ptr {}
    let base = Ptr(data.as_mut_ptr());
    rows.par_iter().for_each_init(
        || {
            (
                vec![Complex64::default(); n3],
                vec![Complex64::default(); scratch_len],
            )
        },
        |(lane, scratch), &row| {
            let p = &base;
            unsafe {
                for k3 in 0..n3 {
                    lane[k3] = *p.0.add(row + plane * k3);
                }
                fft.process_with_scratch(lane, scratch);
                for k3 in 0..n3 {
                    *p.0.add(row + plane * k3) = lane[k3];
                }
            }
        },
    );
}

/// Unnormalized forward DFT of a real volume.
pub fn forward_fft(v: &RealVolume) -> Result<SpectralVolume> {
    let grid = *v.grid();
    let mut data: Vec<Complex64> = v
        .data()
        .par_iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    fft3_in_place(&mut data, grid.dims(), FftDirection::Forward);
    Ok(SpectralVolume::from_parts_unchecked(grid, data))
}

/// Normalized inverse DFT, discarding the imaginary residue when it is below
/// `tol` (relative L2). Returns the volume and the measured residue.
pub fn inverse_fft_with_tolerance(
    s: &SpectralVolume,
    tol: f64,
) -> Result<(RealVolume, f64)> {
    let grid = *s.grid();
    let mut data = s.data().to_vec();
    fft3_in_place(&mut data, grid.dims(), FftDirection::Inverse);
    let scale = 1.0 / grid.len() as f64;
    data.par_iter_mut().for_each(|z| *z *= scale);

    let total: f64 = data.par_iter().map(|z| z.norm_sqr()).sum();
    let imag: f64 = data.par_iter().map(|z| z.im * z.im).sum();
    let residue = if total == 0.0 {
        0.0
    } else {
        (imag / total).sqrt()
    };
    if residue > tol {
        return Err(QsmError::SymmetryViolation {
            residue,
            tolerance: tol,
        });
    }
    let real: Vec<f64> = data.par_iter().map(|z| z.re).collect();
    Ok((
        RealVolume::from_vec(grid, real)?,
        residue,
    ))
}

/// Normalized inverse DFT with the default residue tolerance.
pub fn inverse_fft(s: &SpectralVolume) -> Result<RealVolume> {
    inverse_fft_with_tolerance(s, IMAG_RESIDUE_TOL).map(|(v, _)| v)
}

/// Pointwise multiplication of a spectrum by a real symbol of `xi`.
///
/// Composition of two applications equals one application of the pointwise
/// product symbol, up to floating reassociation.
pub fn apply_multiplier<F>(s: &SpectralVolume, symbol: F) -> Result<SpectralVolume>
where
    F: Fn([f64; 3]) -> f64 + Sync,
{
    let grid = *s.grid();
    let freq = grid.frequencies();
    let src = s.data();
    let mut out = vec![Complex64::default(); src.len()];
    let bad = Mutex::new(None::<(usize, f64)>);
    out.par_iter_mut().enumerate().for_each(|(lin, dst)| {
        let m = symbol(freq.xi_linear(lin));
        if !m.is_finite() {
            let mut guard = bad.lock().unwrap();
            if guard.map_or(true, |(prev, _)| lin < prev) {
                *guard = Some((lin, m));
            }
            return;
        }
        *dst = src[lin] * m;
    });
    if let Some((lin, value)) = bad.into_inner().unwrap() {
        return Err(QsmError::SymbolDomain {
            index: grid.unlinear(lin),
            value,
        });
    }
    Ok(SpectralVolume::from_parts_unchecked(grid, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_volume(grid: GridSpec, seed: u64) -> RealVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        RealVolume::from_vec(grid, data).unwrap()
    }

    /// O(N^2) reference DFT, the independent oracle for the FFT contract.
    fn brute_force_dft(v: &RealVolume) -> Vec<Complex64> {
        let g = v.grid();
        let [n1, n2, n3] = g.dims();
        let mut out = vec![Complex64::default(); g.len()];
        for lin_k in 0..g.len() {
            let [k1, k2, k3] = g.unlinear(lin_k);
            let mut acc = Complex64::default();
            for lin_x in 0..g.len() {
                let [x1, x2, x3] = g.unlinear(lin_x);
                let phase = -2.0
                    * PI
                    * (k1 as f64 * x1 as f64 / n1 as f64
                        + k2 as f64 * x2 as f64 / n2 as f64
                        + k3 as f64 * x3 as f64 / n3 as f64);
                acc += Complex64::from_polar(v.data()[lin_x], phase);
            }
            out[lin_k] = acc;
        }
        out
    }

    #[test]
    fn matches_brute_force_dft() {
        let g = GridSpec::new([4, 6, 8], [1.0; 3]).unwrap();
        let v = random_volume(g, 11);
        let fast = forward_fft(&v).unwrap();
        let slow = brute_force_dft(&v);
        let scale = slow.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in fast.data().iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-12 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_volume_spectrum() {
        let g = GridSpec::cubic(8).unwrap();
        let c = 0.37;
        let v = RealVolume::from_fn(g, |_| c);
        let s = forward_fft(&v).unwrap();
        let dc = s.at([0, 0, 0]);
        assert!((dc.re - c * 512.0).abs() < 1e-10);
        assert!(dc.im.abs() < 1e-10);
        let off_dc: f64 = s.data()[1..].iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(off_dc < 1e-11 * c * 512.0);
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let g = GridSpec::cubic(8).unwrap();
        let v = RealVolume::from_fn(g, |idx| if idx == [0, 0, 0] { 1.0 } else { 0.0 });
        let s = forward_fft(&v).unwrap();
        for z in s.data() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn flat_spectrum_is_impulse() {
        let g = GridSpec::cubic(8).unwrap();
        let s = SpectralVolume::from_vec(g, vec![Complex64::new(1.0, 0.0); g.len()]).unwrap();
        let v = inverse_fft(&s).unwrap();
        assert!((v.at([0, 0, 0]) - 1.0).abs() < 1e-13);
        let rest: f64 = v.data()[1..].iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(rest < 1e-13);
    }

    #[test]
    fn round_trip_16() {
        let g = GridSpec::cubic(16).unwrap();
        let v = random_volume(g, 3);
        let back = inverse_fft(&forward_fft(&v).unwrap()).unwrap();
        let num: f64 = v
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(num / v.l2_norm() < 1e-12);
    }

    #[test]
    fn parseval() {
        let g = GridSpec::new([8, 4, 6], [1.0; 3]).unwrap();
        let v = random_volume(g, 5);
        let s = forward_fft(&v).unwrap();
        let lhs = s.l2_norm().powi(2);
        let rhs = g.len() as f64 * v.l2_norm().powi(2);
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn hermitian_spectrum_from_real_volume() {
        let g = GridSpec::cubic(8).unwrap();
        let s = forward_fft(&random_volume(g, 9)).unwrap();
        assert!(s.hermitian_defect() < 1e-12);
    }

    #[test]
    fn symmetrized_spectrum_inverts_to_real() {
        let g = GridSpec::cubic(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let raw: Vec<Complex64> = (0..g.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let n = g.dims();
        let sym: Vec<Complex64> = (0..g.len())
            .map(|lin| {
                let [k1, k2, k3] = g.unlinear(lin);
                let neg = g.linear([(n[0] - k1) % n[0], (n[1] - k2) % n[1], (n[2] - k3) % n[2]]);
                0.5 * (raw[lin] + raw[neg].conj())
            })
            .collect();
        let s = SpectralVolume::from_vec(g, sym).unwrap();
        let (_, residue) = inverse_fft_with_tolerance(&s, 1e-8).unwrap();
        assert!(residue < 1e-12);
    }

    #[test]
    fn non_hermitian_spectrum_errors() {
        let g = GridSpec::cubic(8).unwrap();
        let mut data = vec![Complex64::default(); g.len()];
        data[g.linear([1, 0, 0])] = Complex64::new(0.0, 1.0); // no conjugate partner
        let s = SpectralVolume::from_vec(g, data).unwrap();
        match inverse_fft(&s) {
            Err(QsmError::SymmetryViolation { residue, .. }) => assert!(residue > 0.1),
            other => panic!("expected symmetry violation, got {other:?}"),
        }
    }

    #[test]
    fn multiplier_identity_and_zero() {
        let g = GridSpec::cubic(8).unwrap();
        let s = forward_fft(&random_volume(g, 1)).unwrap();
        let same = apply_multiplier(&s, |_| 1.0).unwrap();
        assert_eq!(s.data(), same.data());
        let zero = apply_multiplier(&s, |_| 0.0).unwrap();
        assert!(zero.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn multiplier_composition() {
        let g = GridSpec::cubic(16).unwrap();
        let s = forward_fft(&random_volume(g, 2)).unwrap();
        let m1 = |xi: [f64; 3]| 1.0 + xi[0].cos();
        let m2 = |xi: [f64; 3]| xi[2].sin() - 0.5;
        let seq = apply_multiplier(&apply_multiplier(&s, m1).unwrap(), m2).unwrap();
        let prod = apply_multiplier(&s, |xi| m1(xi) * m2(xi)).unwrap();
        let scale = s.l2_norm();
        let diff: f64 = seq
            .data()
            .iter()
            .zip(prod.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff / scale < 1e-13);
        // commutativity
        let ba = apply_multiplier(&apply_multiplier(&s, m2).unwrap(), m1).unwrap();
        let diff: f64 = seq
            .data()
            .iter()
            .zip(ba.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff / scale < 1e-13);
    }

    #[test]
    fn multiplier_rejects_non_finite_symbol() {
        let g = GridSpec::cubic(8).unwrap();
        let s = forward_fft(&random_volume(g, 4)).unwrap();
        let err = apply_multiplier(&s, |xi| 1.0 / (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]))
            .unwrap_err();
        match err {
            QsmError::SymbolDomain { index, .. } => assert_eq!(index, [0, 0, 0]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn even_symbol_preserves_realness() {
        let g = GridSpec::cubic(16).unwrap();
        let s = forward_fft(&random_volume(g, 6)).unwrap();
        let filtered = apply_multiplier(&s, |xi| (xi[0] * xi[0] + xi[2].cos()) * 0.3).unwrap();
        let (_, residue) = inverse_fft_with_tolerance(&filtered, 1e-8).unwrap();
        assert!(residue < 1e-10);
    }
}
