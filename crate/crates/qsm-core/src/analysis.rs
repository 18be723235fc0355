//! Reconstruction-quality and streaking-artifact metrics, plus the
//! independent oracles that validate the spectral pipelines: the spatial
//! fundamental solution of the wave-type operator and the cone geometry of
//! streak propagation.
//!
//! Streaking is measured as L2 energy outside the (dilated) phantom support,
//! and its geometry as the fraction of a volume's energy concentrated in a
//! shell around the spatial cone `2((x1-a1)^2 + (x2-a2)^2) = (x3-a3)^2`
//! through an apex voxel, with periodic-wrap distances.

use rayon::prelude::*;

use crate::error::{QsmError, Result};
use crate::fft::forward_fft;
use crate::grid::GridSpec;
use crate::phantom::{forward_model, rasterize_phantom, shepp_logan_3d, PhantomSpec};
use crate::recon::{smooth_tkd, ReconConfig, ReconMethod, ReconResult};
use crate::symbols::{cutoff_b, dipole_d, wave_p, CutoffProfile, HalfLineProfile, SymbolParams};
use crate::volume::{RealVolume, SpectralVolume};

/// Boolean support mask with a record of how much it was dilated.
#[derive(Debug, Clone)]
pub struct SupportMask {
    grid: GridSpec,
    inside: Vec<bool>,
    dilation: usize,
}

impl SupportMask {
    /// Thresholds `|truth| > 0`, then dilates with a 3x3x3 box the given
    /// number of times (periodic wrap).
    pub fn from_truth(truth: &RealVolume, dilation: usize) -> Self {
        let grid = *truth.grid();
        let mut inside: Vec<bool> = truth.data().iter().map(|&v| v != 0.0).collect();
        let [n1, n2, n3] = grid.dims();
        for _ in 0..dilation {
            let prev = inside.clone();
            inside.par_iter_mut().enumerate().for_each(|(lin, out)| {
                if prev[lin] {
                    return;
                }
                let [v1, v2, v3] = grid.unlinear(lin);
                'scan: for dz in [n3 - 1, 0, 1] {
                    for dy in [n2 - 1, 0, 1] {
                        for dx in [n1 - 1, 0, 1] {
                            let w = [(v1 + dx) % n1, (v2 + dy) % n2, (v3 + dz) % n3];
                            if prev[grid.linear(w)] {
                                *out = true;
                                break 'scan;
                            }
                        }
                    }
                }
            });
        }
        Self {
            grid,
            inside,
            dilation,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }
}

fn check_grids(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(QsmError::GridMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// Root-mean-square error over the mask interior after matching means there
/// (the DC component of a reconstruction is unrecoverable by convention).
pub fn rmse_inside(recon: &RealVolume, truth: &RealVolume, mask: &SupportMask) -> Result<f64> {
    check_grids(recon.grid(), truth.grid())?;
    check_grids(recon.grid(), mask.grid())?;
    let mut n = 0usize;
    let mut mean_diff = 0.0;
    for (lin, &ins) in mask.inside.iter().enumerate() {
        if ins {
            mean_diff += recon.data()[lin] - truth.data()[lin];
            n += 1;
        }
    }
    if n == 0 {
        return Err(QsmError::InvalidParam("support mask is empty".into()));
    }
    let mean_diff = mean_diff / n as f64;
    let mut acc = 0.0;
    for (lin, &ins) in mask.inside.iter().enumerate() {
        if ins {
            let e = recon.data()[lin] - truth.data()[lin] - mean_diff;
            acc += e * e;
        }
    }
    Ok((acc / n as f64).sqrt())
}

/// L2 norm of a volume restricted to the voxels outside the dilated mask.
pub fn streak_energy(recon: &RealVolume, mask: &SupportMask) -> Result<f64> {
    check_grids(recon.grid(), mask.grid())?;
    let acc: f64 = recon
        .data()
        .par_iter()
        .zip(mask.inside.par_iter())
        .map(|(&v, &ins)| if ins { 0.0 } else { v * v })
        .sum();
    Ok(acc.sqrt())
}

/// Distance (physical units) from a displacement to the double cone
/// `2(x1^2 + x2^2) = x3^2` through the origin.
fn cone_distance(dx: [f64; 3]) -> f64 {
    let rho = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
    let z = dx[2];
    let s3 = 3.0f64.sqrt();
    let sqrt2 = std::f64::consts::SQRT_2;
    // ray z = +sqrt(2) rho; projection parameter (rho + sqrt(2) z)/sqrt(3)
    let d_plus = if rho + sqrt2 * z >= 0.0 {
        (sqrt2 * rho - z).abs() / s3
    } else {
        (rho * rho + z * z).sqrt()
    };
    // ray z = -sqrt(2) rho
    let d_minus = if rho - sqrt2 * z >= 0.0 {
        (sqrt2 * rho + z).abs() / s3
    } else {
        (rho * rho + z * z).sqrt()
    };
    d_plus.min(d_minus)
}

/// Periodic minimal-image displacement from `apex` to voxel `v`, in physical
/// units.
fn wrapped_displacement(grid: &GridSpec, apex: [usize; 3], v: [usize; 3]) -> [f64; 3] {
    let n = grid.dims();
    let d = grid.spacing();
    let mut out = [0.0; 3];
    for i in 0..3 {
        let ni = n[i] as i64;
        let diff = v[i] as i64 - apex[i] as i64;
        let wrapped = (diff + ni / 2).rem_euclid(ni) - ni / 2;
        out[i] = wrapped as f64 * d[i];
    }
    out
}

fn shell_membership(grid: &GridSpec, apex: [usize; 3], halfwidth_voxels: f64) -> Vec<bool> {
    let d = grid.spacing();
    let mean_d = (d[0] + d[1] + d[2]) / 3.0;
    let hw = halfwidth_voxels * mean_d;
    (0..grid.len())
        .into_par_iter()
        .map(|lin| {
            let disp = wrapped_displacement(grid, apex, grid.unlinear(lin));
            cone_distance(disp) <= hw
        })
        .collect()
}

/// Fraction of `||vol||_2^2` inside the shell at cone distance
/// `<= halfwidth` (voxels) from the spatial cone through `apex`.
pub fn cone_fraction(vol: &RealVolume, apex: [usize; 3], halfwidth_voxels: f64) -> Result<f64> {
    if !(halfwidth_voxels >= 1.0) {
        return Err(QsmError::InvalidParam(format!(
            "cone halfwidth must be >= 1 voxel, got {halfwidth_voxels}"
        )));
    }
    let grid = vol.grid();
    if !grid.contains(apex) {
        return Err(QsmError::IndexOutOfRange {
            index: apex,
            dims: grid.dims(),
        });
    }
    let shell = shell_membership(grid, apex, halfwidth_voxels);
    let mut inside = 0.0;
    let mut total = 0.0;
    for (lin, &in_shell) in shell.iter().enumerate() {
        let e = vol.data()[lin] * vol.data()[lin];
        total += e;
        if in_shell {
            inside += e;
        }
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(inside / total)
}

/// Fraction of grid voxels inside the cone shell: the uniform-volume baseline
/// that [`cone_fraction`] is compared against.
pub fn shell_volume_fraction(
    grid: &GridSpec,
    apex: [usize; 3],
    halfwidth_voxels: f64,
) -> Result<f64> {
    if !grid.contains(apex) {
        return Err(QsmError::IndexOutOfRange {
            index: apex,
            dims: grid.dims(),
        });
    }
    let shell = shell_membership(grid, apex, halfwidth_voxels);
    Ok(shell.iter().filter(|&&b| b).count() as f64 / grid.len() as f64)
}

/// Spatial fundamental solution of the wave-type operator:
/// `3 / (4 pi sqrt(x3^2 - 2(x1^2 + x2^2)))` inside the open cone
/// `2(x1^2 + x2^2) < x3^2`, else 0. `eps` mollifies the square root inside
/// the support; `eps = 0` gives the raw formula.
pub fn g_fundamental(x: [f64; 3], eps: f64) -> f64 {
    let rho2 = x[0] * x[0] + x[1] * x[1];
    let z2 = x[2] * x[2];
    if 2.0 * rho2 < z2 {
        3.0 / (4.0 * std::f64::consts::PI * (z2 - 2.0 * rho2 + eps * eps).sqrt())
    } else {
        0.0
    }
}

/// Outcome of the fundamental-solution oracle.
#[derive(Debug, Clone)]
pub struct GOracleReport {
    /// Median of `|voxel_volume * g_hat(xi) - 1/p(xi)| / |1/p(xi)|` over the
    /// tested band.
    pub median_rel_deviation: f64,
    /// Number of frequency bins in the band `|p| >= 0.3 max|p|`.
    pub band_bins: usize,
    /// Mollification length used (physical units).
    pub mollify_eps: f64,
}

/// Sub-voxel quadrature order for rasterizing the fundamental solution; the
/// kernel is integrable but unbounded on its cone, so voxel values are
/// volume averages rather than center samples.
const G_RASTER_SUBSAMPLES: usize = 4;

/// Rasterizes the mollified fundamental solution `g` (centered, periodic
/// wrap, volume-averaged per voxel), transforms it, and reports how well
/// `voxel_volume * g_hat` reproduces `1/p` over the frequencies where `|p|`
/// is large.
pub fn g_kernel_oracle(
    grid: &GridSpec,
    mollify_eps: f64,
) -> Result<(SpectralVolume, GOracleReport)> {
    if !(mollify_eps > 0.0) || !mollify_eps.is_finite() {
        return Err(QsmError::InvalidParam(format!(
            "mollification length must be positive, got {mollify_eps}"
        )));
    }
    let n = grid.dims();
    let d = grid.spacing();
    let ss = G_RASTER_SUBSAMPLES;
    let g_vol = RealVolume::from_fn(*grid, |[v1, v2, v3]| {
        let xc = [
            GridSpec::wrap_index(n[0], v1) as f64 * d[0],
            GridSpec::wrap_index(n[1], v2) as f64 * d[1],
            GridSpec::wrap_index(n[2], v3) as f64 * d[2],
        ];
        let m = ss as f64;
        let mut acc = 0.0;
        for a in 0..ss {
            for b in 0..ss {
                for c in 0..ss {
                    let x = [
                        xc[0] + ((a as f64 + 0.5) / m - 0.5) * d[0],
                        xc[1] + ((b as f64 + 0.5) / m - 0.5) * d[1],
                        xc[2] + ((c as f64 + 0.5) / m - 0.5) * d[2],
                    ];
                    acc += g_fundamental(x, mollify_eps);
                }
            }
        }
        acc / (m * m * m)
    });
    let spectrum = forward_fft(&g_vol)?;
    let voxel_volume = d[0] * d[1] * d[2];

    let freq = grid.frequencies();
    let max_abs_p = (0..grid.len())
        .into_par_iter()
        .map(|lin| wave_p(freq.xi_linear(lin)).abs())
        .reduce(|| 0.0, f64::max);
    let threshold = 0.3 * max_abs_p;
    let mut deviations: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .filter_map(|lin| {
            let p = wave_p(freq.xi_linear(lin));
            if p.abs() >= threshold {
                let target = 1.0 / p;
                let got = spectrum.data()[lin].re * voxel_volume;
                Some((got - target).abs() / target.abs())
            } else {
                None
            }
        })
        .collect();
    deviations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let band_bins = deviations.len();
    let median_rel_deviation = if band_bins == 0 {
        f64::INFINITY
    } else {
        deviations[band_bins / 2]
    };
    Ok((
        spectrum,
        GOracleReport {
            median_rel_deviation,
            band_bins,
            mollify_eps,
        },
    ))
}

/// Quality metrics for one reconstruction.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub method: String,
    pub rmse_inside: f64,
    pub streak_energy: f64,
    /// Energy fraction in the cone shell through the apex, when an apex was
    /// configured.
    pub cone_fraction: Option<f64>,
    /// Baseline shell volume fraction for the same apex/halfwidth.
    pub shell_volume_fraction: Option<f64>,
    /// The DC component (volume mean) of a reconstruction is unrecoverable;
    /// rmse_inside therefore compares mean-matched fields.
    pub dc_mean_unrecoverable: bool,
    /// Parameters echoed for reproducibility.
    pub hbar: f64,
    pub s: f64,
    pub m: u32,
    pub big_m: f64,
    pub eps_c: f64,
    pub k_amp: f64,
    pub naive_floor: f64,
    pub mask_dilation: usize,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.rmse_inside, self.streak_energy];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(QsmError::InvalidParam(
                "metrics must be finite and non-negative".into(),
            ));
        }
        if let Some(c) = self.cone_fraction {
            if !(0.0..=1.0).contains(&c) {
                return Err(QsmError::InvalidParam(format!(
                    "cone fraction {c} outside [0,1]"
                )));
            }
        }
        Ok(())
    }
}

/// Computes the metric block for one reconstruction against the truth.
pub fn compute_metrics(
    method: &str,
    recon: &RealVolume,
    truth: &RealVolume,
    mask: &SupportMask,
    cone: Option<([usize; 3], f64)>,
    cfg: &ReconConfig,
) -> Result<MetricsReport> {
    let (cf, sf) = match cone {
        Some((apex, hw)) => (
            Some(cone_fraction(recon, apex, hw)?),
            Some(shell_volume_fraction(recon.grid(), apex, hw)?),
        ),
        None => (None, None),
    };
    let report = MetricsReport {
        method: method.to_string(),
        rmse_inside: rmse_inside(recon, truth, mask)?,
        streak_energy: streak_energy(recon, mask)?,
        cone_fraction: cf,
        shell_volume_fraction: sf,
        dc_mean_unrecoverable: true,
        hbar: cfg.params.hbar,
        s: cfg.params.s,
        m: cfg.params.m,
        big_m: cfg.params.big_m,
        eps_c: cfg.params.eps_c,
        k_amp: cfg.params.k_amp,
        naive_floor: cfg.naive_floor,
        mask_dilation: mask.dilation(),
    };
    report.validate()?;
    Ok(report)
}

/// Tolerances applied by [`consistency_suite`].
#[derive(Debug, Clone, Copy)]
pub struct SuiteTolerances {
    pub closed_vs_composition: f64,
    pub chi1_identity: f64,
    pub chi2_identity: f64,
    pub split_exactness: f64,
    pub error_formula: f64,
}

impl Default for SuiteTolerances {
    fn default() -> Self {
        Self {
            closed_vs_composition: 1e-8,
            chi1_identity: 1e-10,
            chi2_identity: 1e-10,
            split_exactness: 1e-12,
            error_formula: 1e-8,
        }
    }
}

/// Configuration of the self-consistency suite.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub grid: GridSpec,
    pub params: SymbolParams,
    pub cutoff: CutoffProfile,
    pub half: HalfLineProfile,
    pub tolerances: SuiteTolerances,
    /// Split methods to check; an empty list is a vacuous pass.
    pub methods: Vec<ReconMethod>,
    /// Phantom used to generate the clean data; defaults to the standard one.
    pub phantom: Option<PhantomSpec>,
}

impl SuiteConfig {
    /// Default suite: all split methods on the standard phantom.
    pub fn default_at(n: usize) -> Result<Self> {
        let grid = GridSpec::cubic(n)?;
        Ok(Self {
            grid,
            params: SymbolParams::defaults_for_grid(&grid),
            cutoff: CutoffProfile::default(),
            half: HalfLineProfile::new(grid.frequencies().min_step())?,
            tolerances: SuiteTolerances::default(),
            methods: vec![
                ReconMethod::TkdSmooth,
                ReconMethod::RRegularized,
                ReconMethod::TEnhanced,
            ],
            phantom: None,
        })
    }
}

/// One named check with its measured residual.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

/// Aggregated pass/fail report of the consistency suite.
#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn offenders(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }

    /// Errors with the first offender when any check is out of tolerance.
    pub fn ensure_passed(&self) -> Result<()> {
        let offenders = self.offenders();
        if let Some(first) = offenders.first() {
            return Err(QsmError::Inconsistency {
                check: format!(
                    "{} ({} failing checks in total)",
                    first.name,
                    offenders.len()
                ),
                residual: first.residual,
                tolerance: first.tolerance,
            });
        }
        Ok(())
    }

    fn push(&mut self, name: impl Into<String>, residual: f64, tolerance: f64) {
        self.checks.push(CheckResult {
            name: name.into(),
            residual,
            tolerance,
        });
    }
}

fn spectral_rel_l2(
    got: &SpectralVolume,
    expect_at: impl Fn(usize, [f64; 3]) -> num_complex::Complex64,
) -> f64 {
    let freq = got.grid().frequencies();
    let mut num = 0.0;
    let mut den = 0.0;
    for (lin, z) in got.data().iter().enumerate() {
        let e = expect_at(lin, freq.xi_linear(lin));
        num += (z - e).norm_sqr();
        den += e.norm_sqr();
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

fn rel_l2(a: &RealVolume, b: &RealVolume) -> f64 {
    let num: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den = b.l2_norm();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Runs the closed-form-vs-composition checks and the clean-data identities
/// of the reconstruction module, aggregating measured residuals.
pub fn consistency_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    if cfg.methods.is_empty() {
        return Ok(report);
    }
    let phantom = match &cfg.phantom {
        Some(p) => p.clone(),
        None => shepp_logan_3d(),
    };
    let chi = rasterize_phantom(&phantom, &cfg.grid)?;
    let psi = forward_model(&chi)?;
    let chi_hat = forward_fft(&chi)?;
    let tol = cfg.tolerances;

    for &method in &cfg.methods {
        let rcfg = ReconConfig::new(method, cfg.params, cfg.cutoff, cfg.half)?;
        let name = method.name();
        let res: ReconResult = match method {
            ReconMethod::TkdSmooth => smooth_tkd(&psi, &rcfg)?,
            ReconMethod::RRegularized => crate::recon::r_regularized(&psi, &rcfg)?,
            ReconMethod::TEnhanced => crate::recon::t_enhanced(&psi, &rcfg)?,
            other => {
                return Err(QsmError::InvalidParam(format!(
                    "consistency suite covers split methods only, got {}",
                    other.name()
                )))
            }
        };

        for (part, rel) in &res.diagnostics.composition_discrepancies {
            report.push(
                format!("{name}: {part} closed form vs composition"),
                *rel,
                tol.closed_vs_composition,
            );
        }

        // split exactness
        if let (Some(c1), Some(c2)) = (&res.chi1, &res.chi2) {
            let sum = c1.add_scaled(c2, 1.0)?;
            report.push(
                format!("{name}: chi = chi1 + chi2"),
                rel_l2(&res.chi, &sum),
                tol.split_exactness,
            );
        }
        if let (Some(c2), Some(c21), Some(c22)) = (&res.chi2, &res.chi21, &res.chi22) {
            let sum = c21.add_scaled(c22, 1.0)?;
            report.push(
                format!("{name}: chi2 = chi21 + chi22"),
                rel_l2(c2, &sum),
                tol.split_exactness,
            );
        }

        // clean-data chi1 identity: chi1_hat = (1 - b) chi_hat
        if let Some(c1) = &res.chi1 {
            let got = forward_fft(c1)?;
            let hbar = cfg.params.hbar;
            let cutoff = cfg.cutoff;
            let rel = spectral_rel_l2(&got, |lin, xi| {
                chi_hat.data()[lin] * (1.0 - cutoff_b(xi, hbar, &cutoff))
            });
            report.push(format!("{name}: clean chi1 identity"), rel, tol.chi1_identity);
        }

        if method == ReconMethod::TkdSmooth {
            // clean-data chi2 identity: chi2_hat = b |D|/hbar chi_hat
            if let Some(c2) = &res.chi2 {
                let got = forward_fft(c2)?;
                let hbar = cfg.params.hbar;
                let cutoff = cfg.cutoff;
                let rel = spectral_rel_l2(&got, |lin, xi| {
                    chi_hat.data()[lin] * (cutoff_b(xi, hbar, &cutoff) * dipole_d(xi).abs() / hbar)
                });
                report.push(format!("{name}: clean chi2 identity"), rel, tol.chi2_identity);
            }

            // round-trip error equals the predicted closed-form value
            let err: f64 = res
                .chi
                .data()
                .iter()
                .zip(chi.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let freq = cfg.grid.frequencies();
            let mut pred = 0.0;
            for (lin, z) in chi_hat.data().iter().enumerate() {
                let xi = freq.xi_linear(lin);
                let w = cutoff_b(xi, cfg.params.hbar, &cfg.cutoff)
                    * (1.0 - dipole_d(xi).abs() / cfg.params.hbar);
                pred += z.norm_sqr() * w * w;
            }
            let pred = pred.sqrt() / (cfg.grid.len() as f64).sqrt();
            let rel = if pred == 0.0 {
                err
            } else {
                (err - pred).abs() / pred
            };
            report.push(format!("{name}: error formula"), rel, tol.error_formula);
        }
    }
    Ok(report)
}
