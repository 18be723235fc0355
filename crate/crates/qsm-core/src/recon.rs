//! Reconstruction pipelines: thresholded spectral division (naive and
//! classic TKD), the smooth TKD split `chi = chi1 + chi2`, the
//! inverse-power-regularized split `chi2 = chi21 + chi22`, and the
//! half-wave-enhanced variant.
//!
//! Every pipeline ships as an algebraically simplified closed-form multiplier
//! with no division by the wave symbol anywhere, so cone singularities are
//! eliminated exactly. Each split method additionally evaluates the raw
//! operator composition (sequential multiplier application with a guarded
//! `1/p`) and records the discrepancy against the closed form as a
//! diagnostic; a discrepancy beyond tolerance is an internal-consistency
//! error.
//!
//! Conventions: `sign(0) = 0`, all multipliers vanish at DC, so
//! reconstructions are zero-mean; the mean of the true susceptibility is
//! unrecoverable and reported as such by the metrics layer.

use crate::error::{QsmError, Result};
use crate::fft::{apply_multiplier, forward_fft, inverse_fft_with_tolerance};
use crate::symbols::{
    cutoff_b, dipole_d, enhancer_p, halfwave_t, laplacian_mult, lowpass_c, q_inverse,
    regularizer_r, sign0, wave_p, CutoffProfile, HalfLineProfile, RegMode, SymbolParams,
    SymbolTable,
};
use crate::volume::{RealVolume, SpectralVolume};

/// Relative tolerance for the closed-form vs composition diagnostic of the
/// smooth TKD split.
pub const SMOOTH_TKD_CONSISTENCY_TOL: f64 = 1e-8;
/// Stricter tolerance for the simplified multipliers of the regularized and
/// enhanced splits.
pub const REGULARIZED_CONSISTENCY_TOL: f64 = 1e-10;
/// Imaginary-residue bound enforced on the half-wave-enhanced method.
pub const T_ENHANCED_RESIDUE_TOL: f64 = 1e-10;

/// Selector for [`reconstruct`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconMethod {
    Naive,
    TkdClassic,
    TkdSmooth,
    RRegularized,
    TEnhanced,
}

impl ReconMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ReconMethod::Naive => "naive",
            ReconMethod::TkdClassic => "tkd-classic",
            ReconMethod::TkdSmooth => "tkd-smooth",
            ReconMethod::RRegularized => "r-reg",
            ReconMethod::TEnhanced => "t-enhanced",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "naive" => ReconMethod::Naive,
            "tkd-classic" => ReconMethod::TkdClassic,
            "tkd-smooth" => ReconMethod::TkdSmooth,
            "r-reg" => ReconMethod::RRegularized,
            "t-enhanced" => ReconMethod::TEnhanced,
            other => {
                return Err(QsmError::InvalidParam(format!(
                    "unknown reconstruction method '{other}'"
                )))
            }
        })
    }
}

/// Pipeline selection plus all symbol parameters.
#[derive(Debug, Clone)]
pub struct ReconConfig {
    pub method: ReconMethod,
    pub params: SymbolParams,
    pub cutoff: CutoffProfile,
    pub half: HalfLineProfile,
    /// Magnitude clamp of the naive inverse.
    pub naive_floor: f64,
    /// Guard for the diagnostic `1/p`; defaults to `hbar * cutoff.inner`.
    pub qinv_guard: Option<f64>,
}

impl ReconConfig {
    pub fn new(
        method: ReconMethod,
        params: SymbolParams,
        cutoff: CutoffProfile,
        half: HalfLineProfile,
    ) -> Result<Self> {
        params.validate(&cutoff)?;
        Ok(Self {
            method,
            params,
            cutoff,
            half,
            naive_floor: 1e-3,
            qinv_guard: None,
        })
    }

    fn guard(&self) -> f64 {
        self.qinv_guard
            .unwrap_or(self.params.hbar * self.cutoff.inner)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate(&self.cutoff)?;
        if !(self.naive_floor > 0.0) || !self.naive_floor.is_finite() {
            return Err(QsmError::InvalidParam(format!(
                "naive floor must be positive, got {}",
                self.naive_floor
            )));
        }
        if self.method == ReconMethod::RRegularized && self.params.s < 2.0 {
            return Err(QsmError::InvalidParam(format!(
                "r-reg requires s >= 2, got {}",
                self.params.s
            )));
        }
        Ok(())
    }
}

/// Numerical bookkeeping gathered while reconstructing.
#[derive(Debug, Clone, Default)]
pub struct ReconDiagnostics {
    /// Relative imaginary residue of each inverse FFT, by part name.
    pub imag_residues: Vec<(String, f64)>,
    /// Number of frequency bins where the guarded `1/p` returned 0.
    pub guard_hits: usize,
    /// Relative closed-form vs composition discrepancy per part, measured
    /// off the guard set.
    pub composition_discrepancies: Vec<(String, f64)>,
}

/// A reconstruction and, when the method defines them, its spectral parts.
#[derive(Debug, Clone)]
pub struct ReconResult {
    pub chi: RealVolume,
    pub chi1: Option<RealVolume>,
    pub chi2: Option<RealVolume>,
    pub chi21: Option<RealVolume>,
    pub chi22: Option<RealVolume>,
    pub diagnostics: ReconDiagnostics,
}

impl ReconResult {
    fn plain(chi: RealVolume) -> Self {
        Self {
            chi,
            chi1: None,
            chi2: None,
            chi21: None,
            chi22: None,
            diagnostics: ReconDiagnostics::default(),
        }
    }
}

/// Piecewise clamped-division multiplier shared by the naive inverse and
/// classic TKD: `1/d` where `|d| >= threshold`, else `sign(d)/threshold`.
#[inline]
pub fn clamped_division(d: f64, threshold: f64) -> f64 {
    if d.abs() >= threshold {
        1.0 / d
    } else {
        sign0(d) / threshold
    }
}

/// Hard spectral division with magnitude clamp at `floor`. Exhibits strong
/// streaking on perturbed data; stands in for an unregularized closed-form
/// inverse.
pub fn naive_inverse(psi: &RealVolume, floor: f64) -> Result<RealVolume> {
    if !(floor > 0.0) || !floor.is_finite() {
        return Err(QsmError::InvalidParam(format!(
            "naive floor must be positive, got {floor}"
        )));
    }
    let spectrum = forward_fft(psi)?;
    let filtered = apply_multiplier(&spectrum, |xi| clamped_division(dipole_d(xi), floor))?;
    inverse_fft_with_tolerance(&filtered, crate::fft::IMAG_RESIDUE_TOL).map(|(v, _)| v)
}

/// Classic TKD: exact piecewise division with threshold `hbar`, `sign(0)=0`.
pub fn tkd_classic(psi: &RealVolume, hbar: f64) -> Result<RealVolume> {
    if !(hbar > 0.0) || !hbar.is_finite() {
        return Err(QsmError::InvalidParam(format!(
            "TKD threshold must be positive, got {hbar}"
        )));
    }
    let spectrum = forward_fft(psi)?;
    let filtered = apply_multiplier(&spectrum, |xi| clamped_division(dipole_d(xi), hbar))?;
    inverse_fft_with_tolerance(&filtered, crate::fft::IMAG_RESIDUE_TOL).map(|(v, _)| v)
}

/// Closed-form multiplier of the smooth-TKD `chi1` piece:
/// `(1 - b_hbar(xi)) / D(xi)`, vanishing wherever `1 - b` does (which covers
/// `D = 0`, since `1 - b = 0` for `|p| <= hbar*inner`).
fn chi1_multiplier(params: SymbolParams, cutoff: CutoffProfile) -> impl Fn([f64; 3]) -> f64 + Sync {
    move |xi| {
        let omb = 1.0 - cutoff_b(xi, params.hbar, &cutoff);
        if omb == 0.0 {
            0.0
        } else {
            omb / dipole_d(xi)
        }
    }
}

/// Closed-form multiplier of the smooth-TKD `chi2` piece:
/// `b_hbar(xi) sign(p(xi)) / hbar`.
fn chi2_smooth_multiplier(
    params: SymbolParams,
    cutoff: CutoffProfile,
) -> impl Fn([f64; 3]) -> f64 + Sync {
    move |xi| sign0(wave_p(xi)) * cutoff_b(xi, params.hbar, &cutoff) / params.hbar
}

/// Relative L2 distance between two spectra over the bins with
/// `|p(xi)| > guard`, plus the number of bins inside the guard set.
fn off_guard_discrepancy(a: &SpectralVolume, b: &SpectralVolume, guard: f64) -> (f64, usize) {
    let freq = a.grid().frequencies();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut hits = 0usize;
    for (lin, (za, zb)) in a.data().iter().zip(b.data()).enumerate() {
        let p = wave_p(freq.xi_linear(lin));
        if p.abs() > guard {
            num += (za - zb).norm_sqr();
            den += zb.norm_sqr();
        } else {
            hits += 1;
        }
    }
    let rel = if den > 0.0 {
        (num / den).sqrt()
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (rel, hits)
}

type Symbol<'a> = Box<dyn Fn([f64; 3]) -> f64 + Sync + 'a>;

/// Applies a chain of multipliers one after another (the literal operator
/// composition used by the diagnostics).
fn apply_chain(spectrum: &SpectralVolume, chain: &[Symbol<'_>]) -> Result<SpectralVolume> {
    let mut acc = spectrum.clone();
    for m in chain {
        acc = apply_multiplier(&acc, m)?;
    }
    Ok(acc)
}

/// One spectral part of a split method: closed-form multiplier plus the raw
/// composition chain it must agree with.
struct Part<'a> {
    name: &'static str,
    closed: Symbol<'a>,
    chain: Vec<Symbol<'a>>,
}

/// Evaluates the parts of a split method: inverse-transforms each closed-form
/// spectrum, runs the composition diagnostic, and collects diagnostics.
fn run_split(
    psi: &RealVolume,
    parts: Vec<Part<'_>>,
    guard: f64,
    consistency_tol: f64,
    residue_tol: f64,
) -> Result<(Vec<RealVolume>, ReconDiagnostics)> {
    let spectrum = forward_fft(psi)?;
    let mut volumes = Vec::with_capacity(parts.len());
    let mut diag = ReconDiagnostics::default();
    for part in &parts {
        let closed = apply_multiplier(&spectrum, &part.closed)?;
        let composed = apply_chain(&spectrum, &part.chain)?;
        let (rel, hits) = off_guard_discrepancy(&composed, &closed, guard);
        diag.guard_hits = hits;
        diag.composition_discrepancies
            .push((part.name.to_string(), rel));
        if rel > consistency_tol {
            return Err(QsmError::Inconsistency {
                check: format!("{} closed form vs operator composition", part.name),
                residual: rel,
                tolerance: consistency_tol,
            });
        }
        let (vol, residue) = inverse_fft_with_tolerance(&closed, residue_tol)?;
        diag.imag_residues.push((part.name.to_string(), residue));
        volumes.push(vol);
    }
    Ok((volumes, diag))
}

/// Smooth TKD: `chi1` away from the characteristic cone, `chi2` near it,
/// `chi = chi1 + chi2`. The near-cone regularizer is fixed to `|xi|^{-2}`.
pub fn smooth_tkd(psi: &RealVolume, cfg: &ReconConfig) -> Result<ReconResult> {
    cfg.params.validate(&cfg.cutoff)?;
    let p = cfg.params;
    let cutoff = cfg.cutoff;
    let guard = cfg.guard();
    let hbar = p.hbar;

    let parts = vec![
        Part {
            name: "chi1",
            closed: Box::new(chi1_multiplier(p, cutoff)),
            chain: vec![
                Box::new(laplacian_mult),
                Box::new(move |xi| 1.0 - cutoff_b(xi, hbar, &cutoff)),
                Box::new(move |xi| q_inverse(xi, guard)),
            ],
        },
        Part {
            name: "chi2",
            closed: Box::new(chi2_smooth_multiplier(p, cutoff)),
            chain: vec![
                Box::new(laplacian_mult),
                Box::new(move |xi| cutoff_b(xi, hbar, &cutoff)),
                Box::new(move |xi| regularizer_r(xi, 2.0, 1.0, RegMode::Plain, 0.0, &cutoff)),
                Box::new(move |xi| q_inverse(xi, guard)),
                Box::new(move |xi| enhancer_p(xi, hbar)),
            ],
        },
    ];
    let (mut volumes, diag) = run_split(
        psi,
        parts,
        guard,
        SMOOTH_TKD_CONSISTENCY_TOL,
        crate::fft::IMAG_RESIDUE_TOL,
    )?;
    let chi2 = volumes.pop().expect("two parts");
    let chi1 = volumes.pop().expect("two parts");
    let chi = chi1.add_scaled(&chi2, 1.0)?;
    Ok(ReconResult {
        chi,
        chi1: Some(chi1),
        chi2: Some(chi2),
        chi21: None,
        chi22: None,
        diagnostics: diag,
    })
}

/// Builds the three closed-form/composition parts shared by the regularized
/// and half-wave-enhanced splits. `enhancer_power` is the extra power of the
/// half-wave symbol applied to `chi21` (0 for the plain regularized method).
fn split_parts<'a>(
    p: SymbolParams,
    cutoff: CutoffProfile,
    half: HalfLineProfile,
    guard: f64,
    enhancer_power: u32,
) -> Vec<Part<'a>> {
    let hbar = p.hbar;
    let m_i32 = enhancer_power as i32;

    let mut chain21: Vec<Symbol<'a>> = vec![
        Box::new(laplacian_mult),
        Box::new(move |xi| cutoff_b(xi, hbar, &cutoff)),
        Box::new(move |xi| 1.0 - lowpass_c(xi, p.big_m, p.eps_c, &cutoff)),
        Box::new(move |xi| regularizer_r(xi, p.s, p.k_amp, RegMode::Plain, 0.0, &cutoff)),
        Box::new(move |xi| q_inverse(xi, guard)),
        Box::new(move |xi| enhancer_p(xi, hbar)),
    ];
    for _ in 0..enhancer_power {
        chain21.push(Box::new(move |xi| halfwave_t(xi, &half)));
    }

    vec![
        Part {
            name: "chi1",
            closed: Box::new(chi1_multiplier(p, cutoff)),
            chain: vec![
                Box::new(laplacian_mult),
                Box::new(move |xi| 1.0 - cutoff_b(xi, hbar, &cutoff)),
                Box::new(move |xi| q_inverse(xi, guard)),
            ],
        },
        Part {
            name: "chi21",
            closed: Box::new(move |xi| {
                let t_pow = if enhancer_power == 0 {
                    1.0
                } else {
                    halfwave_t(xi, &half).powi(m_i32)
                };
                t_pow
                    * sign0(wave_p(xi))
                    * regularizer_r(xi, p.s, p.k_amp, RegMode::Plain, 0.0, &cutoff)
                    * (1.0 - lowpass_c(xi, p.big_m, p.eps_c, &cutoff))
                    * cutoff_b(xi, hbar, &cutoff)
                    * laplacian_mult(xi)
                    / hbar
            }),
            chain: chain21,
        },
        Part {
            name: "chi22",
            closed: Box::new(move |xi| {
                sign0(wave_p(xi)) * lowpass_c(xi, p.big_m, p.eps_c, &cutoff)
                    * cutoff_b(xi, hbar, &cutoff)
                    / hbar
            }),
            chain: vec![
                Box::new(laplacian_mult),
                Box::new(move |xi| cutoff_b(xi, hbar, &cutoff)),
                Box::new(move |xi| lowpass_c(xi, p.big_m, p.eps_c, &cutoff)),
                Box::new(move |xi| regularizer_r(xi, 2.0, 1.0, RegMode::Plain, 0.0, &cutoff)),
                Box::new(move |xi| q_inverse(xi, guard)),
                Box::new(move |xi| enhancer_p(xi, hbar)),
            ],
        },
    ]
}

fn assemble_split(
    psi: &RealVolume,
    cfg: &ReconConfig,
    enhancer_power: u32,
    residue_tol: f64,
) -> Result<ReconResult> {
    let guard = cfg.guard();
    let parts = split_parts(cfg.params, cfg.cutoff, cfg.half, guard, enhancer_power);
    let (mut volumes, diag) = run_split(psi, parts, guard, REGULARIZED_CONSISTENCY_TOL, residue_tol)?;
    let chi22 = volumes.pop().expect("three parts");
    let chi21 = volumes.pop().expect("three parts");
    let chi1 = volumes.pop().expect("three parts");
    let chi2 = chi21.add_scaled(&chi22, 1.0)?;
    let chi = chi1.add_scaled(&chi2, 1.0)?;
    Ok(ReconResult {
        chi,
        chi1: Some(chi1),
        chi2: Some(chi2),
        chi21: Some(chi21),
        chi22: Some(chi22),
        diagnostics: diag,
    })
}

/// Regularized split: `chi1` as in smooth TKD, the near-cone part further
/// split by the radial low-pass into a `K|xi|^{-s}`-regularized high piece
/// `chi21` and a low piece `chi22` that keeps the smooth image content.
pub fn r_regularized(psi: &RealVolume, cfg: &ReconConfig) -> Result<ReconResult> {
    cfg.params.validate(&cfg.cutoff)?;
    if cfg.params.s < 2.0 {
        return Err(QsmError::InvalidParam(format!(
            "r-reg requires s >= 2, got {}",
            cfg.params.s
        )));
    }
    assemble_split(psi, cfg, 0, crate::fft::IMAG_RESIDUE_TOL)
}

/// Half-wave-enhanced split: `chi21` additionally carries `t(xi)^m`, which
/// vanishes on the characteristic cone and damps the streak directions while
/// leaving the rest of the singularities at full strength.
pub fn t_enhanced(psi: &RealVolume, cfg: &ReconConfig) -> Result<ReconResult> {
    cfg.params.validate(&cfg.cutoff)?;
    if cfg.params.m % 2 != 0 {
        return Err(QsmError::OddEnhancementPower(cfg.params.m));
    }
    assemble_split(psi, cfg, cfg.params.m, T_ENHANCED_RESIDUE_TOL)
}

/// Runs the configured method.
pub fn reconstruct(psi: &RealVolume, cfg: &ReconConfig) -> Result<ReconResult> {
    cfg.validate()?;
    match cfg.method {
        ReconMethod::Naive => naive_inverse(psi, cfg.naive_floor).map(ReconResult::plain),
        ReconMethod::TkdClassic => tkd_classic(psi, cfg.params.hbar).map(ReconResult::plain),
        ReconMethod::TkdSmooth => smooth_tkd(psi, cfg),
        ReconMethod::RRegularized => r_regularized(psi, cfg),
        ReconMethod::TEnhanced => t_enhanced(psi, cfg),
    }
}

/// Generic pipeline evaluator: resolves each name in `table`, multiplies the
/// symbols pointwise, and applies the product once. Identical to sequential
/// application up to floating reassociation.
pub fn compose_pipeline(psi: &RealVolume, names: &[&str], table: &SymbolTable) -> Result<RealVolume> {
    let symbols: Vec<_> = names
        .iter()
        .map(|n| table.by_name(n))
        .collect::<Result<_>>()?;
    let spectrum = forward_fft(psi)?;
    let filtered = apply_multiplier(&spectrum, |xi| {
        symbols.iter().map(|s| s(xi)).product::<f64>()
    })?;
    inverse_fft_with_tolerance(&filtered, crate::fft::IMAG_RESIDUE_TOL).map(|(v, _)| v)
}
