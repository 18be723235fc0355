//! Scalar multiplier symbols: the dipole kernel `D`, the wave symbol `p` and
//! its factorization, smooth cutoffs, the threshold enhancer, inverse-power
//! regularizers, the radial low-pass, the half-wave symbol `t`, the Laplacian
//! multiplier and the guarded inverse of `p`.
//!
//! All symbols are pure functions of the angular frequency `xi` (the
//! x-independent case), so operator composition is exact pointwise
//! multiplication. Singular points follow explicit conventions:
//! `D(0) = 0`, `R(0) = 0`, `qinv(0) = 0` and `sign(0) = 0`, which makes every
//! pipeline built from them bounded and zero-mean.
//!
//! Wherever two expressions are algebraically equal, the forms used here are
//! chosen so that grid frequencies that lie exactly on the characteristic
//! cone `xi1^2 + xi2^2 = 2*xi3^2` evaluate to exact zeros: `p` is computed as
//! `(xi1^2 + xi2^2 - 2*xi3^2)/3` and the half-wave factors through the
//! difference of squares.

use std::f64::consts::SQRT_2;

use crate::error::{QsmError, Result};

/// `sign` with the convention `sign(0) = 0` (also maps `-0.0` to `0`).
#[inline]
pub fn sign0(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

#[inline]
fn norm_sqr(xi: [f64; 3]) -> f64 {
    xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]
}

/// Wave symbol `p(xi) = -xi3^2 + |xi|^2/3`, evaluated as
/// `(xi1^2 + xi2^2 - 2*xi3^2)/3` so that lattice points with
/// `xi1^2 + xi2^2 = 2*xi3^2` representable in floating point give exactly 0.
#[inline]
pub fn wave_p(xi: [f64; 3]) -> f64 {
    (xi[0] * xi[0] + xi[1] * xi[1] - 2.0 * xi[2] * xi[2]) / 3.0
}

/// Dipole kernel `D(xi) = 1/3 - xi3^2/|xi|^2`, with `D(0) = 0`.
///
/// Evaluated as `p(xi)/|xi|^2`, which is the same quantity and shares the
/// exact zero set (and sign) with [`wave_p`] on the lattice.
#[inline]
pub fn dipole_d(xi: [f64; 3]) -> f64 {
    let n2 = norm_sqr(xi);
    if n2 == 0.0 {
        0.0
    } else {
        wave_p(xi) / n2
    }
}

/// Factored form `-(1/3)(sqrt(2) xi3 - rho)(sqrt(2) xi3 + rho)` with
/// `rho = sqrt(xi1^2 + xi2^2)`; equals [`wave_p`] to relative 1e-14.
#[inline]
pub fn factored_p(xi: [f64; 3]) -> f64 {
    let rho = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
    let a = SQRT_2 * xi[2];
    -(a - rho) * (a + rho) / 3.0
}

/// Laplacian multiplier `|xi|^2`.
#[inline]
pub fn laplacian_mult(xi: [f64; 3]) -> f64 {
    norm_sqr(xi)
}

/// Guarded inverse `1/p(xi)` where `|p| > guard`, else 0.
///
/// Only meaningful under cutoffs that vanish where `|p| <= guard`; the
/// shipped reconstructions use algebraically simplified closed forms instead
/// and keep this for the composition diagnostics.
#[inline]
pub fn q_inverse(xi: [f64; 3], guard: f64) -> f64 {
    let p = wave_p(xi);
    if p.abs() > guard {
        1.0 / p
    } else {
        0.0
    }
}

/// Threshold enhancer `sigma(P_hbar) = |p(xi)|/hbar` (i.e. `sign(p) p / hbar`
/// with `sign(0) = 0`).
#[inline]
pub fn enhancer_p(xi: [f64; 3], hbar: f64) -> f64 {
    wave_p(xi).abs() / hbar
}

/// Shape of the compactly supported radial cutoff `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffKind {
    /// `C-infinity` bump built from `S(x) = exp(-1/x)`.
    SmoothExp,
    /// Cheaper C^2 quintic smoothstep.
    Smoothstep,
}

/// Radial cutoff profile: 1 on `[0, inner]`, 0 on `[outer, inf)`, smooth and
/// monotone non-increasing in between. Evaluated on `|t|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub kind: CutoffKind,
    pub inner: f64,
    pub outer: f64,
}

impl Default for CutoffProfile {
    fn default() -> Self {
        Self {
            kind: CutoffKind::SmoothExp,
            inner: 1.0,
            outer: 2.0,
        }
    }
}

/// `exp(-1/x)` for `x > 0`, else 0.
#[inline]
fn bump(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

impl CutoffProfile {
    pub fn new(kind: CutoffKind, inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner && outer.is_finite()) {
            return Err(QsmError::InvalidParam(format!(
                "cutoff profile needs 0 < inner < outer (finite), got inner={inner} outer={outer}"
            )));
        }
        Ok(Self { kind, inner, outer })
    }

    /// Same shape with a different support edge (used for the low-pass whose
    /// outer edge is the plateau parameter `M`).
    pub fn with_outer(&self, outer: f64) -> Result<Self> {
        Self::new(self.kind, self.inner, outer)
    }

    /// Profile value at `t` (symmetric in `t`).
    pub fn eval(&self, t: f64) -> f64 {
        let u = t.abs();
        if u <= self.inner {
            return 1.0;
        }
        if u >= self.outer {
            return 0.0;
        }
        match self.kind {
            CutoffKind::SmoothExp => {
                let s1 = bump(self.outer - u);
                let s2 = bump(u - self.inner);
                s1 / (s1 + s2)
            }
            CutoffKind::Smoothstep => {
                let w = (u - self.inner) / (self.outer - self.inner);
                (1.0 - w * w * w * (10.0 + w * (-15.0 + 6.0 * w))).clamp(0.0, 1.0)
            }
        }
    }
}

/// One-sided ramp: 0 for `t <= 0`, 1 for `t >= ramp`, smooth monotone rise in
/// between (same `exp(-1/x)` construction as the radial cutoff).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfLineProfile {
    pub ramp: f64,
}

impl HalfLineProfile {
    pub fn new(ramp: f64) -> Result<Self> {
        if !(ramp > 0.0) || !ramp.is_finite() {
            return Err(QsmError::InvalidParam(format!(
                "half-line ramp width must be positive and finite, got {ramp}"
            )));
        }
        Ok(Self { ramp })
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= self.ramp {
            1.0
        } else {
            let s1 = bump(t);
            let s2 = bump(self.ramp - t);
            s1 / (s1 + s2)
        }
    }
}

/// Near-cone cutoff `b_hbar(xi) = f(p(xi)/hbar)`: 1 where `|p| <= hbar*inner`,
/// 0 where `|p| >= hbar*outer`.
#[inline]
pub fn cutoff_b(xi: [f64; 3], hbar: f64, profile: &CutoffProfile) -> f64 {
    profile.eval(wave_p(xi) / hbar)
}

/// Behaviour of the inverse-power regularizer at low frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegMode {
    /// `K |xi|^{-s}` with the convention `R(0) = 0`.
    Plain,
    /// Additionally multiplied by `1 - f(|xi|/eps_guard)`, vanishing on a
    /// whole neighborhood of `xi = 0`.
    ConeGuarded,
}

/// Inverse-power regularizer `r(xi) = K |xi|^{-s}`.
pub fn regularizer_r(
    xi: [f64; 3],
    s: f64,
    amplitude: f64,
    mode: RegMode,
    eps_guard: f64,
    profile: &CutoffProfile,
) -> f64 {
    let n = norm_sqr(xi).sqrt();
    if n == 0.0 {
        return 0.0;
    }
    let base = amplitude * n.powf(-s);
    match mode {
        RegMode::Plain => base,
        RegMode::ConeGuarded => base * (1.0 - profile.eval(n / eps_guard)),
    }
}

/// Radial low-pass `c_{M,eps}(xi)`: 1 for `|xi| <= eps*inner`, 0 for
/// `|xi| >= eps*M`, monotone radial in between.
pub fn lowpass_c(xi: [f64; 3], big_m: f64, eps: f64, profile: &CutoffProfile) -> f64 {
    // reuse the profile shape with support edge M
    let shaped = CutoffProfile {
        kind: profile.kind,
        inner: profile.inner,
        outer: big_m,
    };
    shaped.eval(norm_sqr(xi).sqrt() / eps)
}

/// Half-wave symbol
/// `t(xi) = h(xi3)(sqrt(2) xi3 - rho) + h(-xi3)(sqrt(2) xi3 + rho)` with
/// `rho = sqrt(xi1^2 + xi2^2)`.
///
/// Each active factor is evaluated as `(2 xi3^2 - rho^2) / (sqrt(2)|xi3| + rho)`
/// (difference of squares), so lattice points satisfying
/// `2*fl(xi3^2) = fl(xi1^2) + fl(xi2^2)` yield an exact zero.
pub fn halfwave_t(xi: [f64; 3], h: &HalfLineProfile) -> f64 {
    let rho2 = xi[0] * xi[0] + xi[1] * xi[1];
    let rho = rho2.sqrt();
    let z = xi[2];
    let num = 2.0 * z * z - rho2;
    let mut t = 0.0;
    let hp = h.eval(z);
    if hp != 0.0 {
        // z > 0 here, so the denominator is positive
        t += hp * num / (SQRT_2 * z + rho);
    }
    let hm = h.eval(-z);
    if hm != 0.0 {
        // z < 0 here; sqrt(2) xi3 + rho = -(num)/(sqrt(2)|xi3| + rho)
        t += hm * -num / (SQRT_2 * -z + rho);
    }
    t
}

/// Pipeline parameters: TKD threshold, regularization order and amplitude,
/// enhancement power, and the low-pass plateau/scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolParams {
    /// TKD threshold.
    pub hbar: f64,
    /// Regularization order of `R`.
    pub s: f64,
    /// Half-wave enhancement power; must be even for real output.
    pub m: u32,
    /// Low-pass support parameter `M` (support edge at `eps_c * M`).
    pub big_m: f64,
    /// Low-pass frequency scale.
    pub eps_c: f64,
    /// Amplitude `K` of `R`.
    pub k_amp: f64,
}

impl SymbolParams {
    pub fn validate(&self, profile: &CutoffProfile) -> Result<()> {
        let positive = [
            ("hbar", self.hbar),
            ("s", self.s),
            ("M", self.big_m),
            ("eps_c", self.eps_c),
            ("K", self.k_amp),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(QsmError::InvalidParam(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.m % 2 != 0 {
            return Err(QsmError::OddEnhancementPower(self.m));
        }
        if self.big_m <= profile.inner {
            return Err(QsmError::InvalidParam(format!(
                "low-pass support M={} must exceed the profile plateau edge {}",
                self.big_m, profile.inner
            )));
        }
        Ok(())
    }

    /// Paper defaults: `hbar = 0.04`, `s = 4`, `m = 2`, `K = 1`, and the
    /// low-pass plateau covering the lowest 5% of the grid's `|xi|` range with
    /// support out to twice that.
    pub fn defaults_for_grid(grid: &crate::grid::GridSpec) -> Self {
        let xi_max = grid.frequencies().max_norm();
        Self {
            hbar: 0.04,
            s: 4.0,
            m: 2,
            big_m: 2.0,
            eps_c: 0.05 * xi_max,
            k_amp: 1.0,
        }
    }
}

/// Bundle of parameters and profiles under which symbols are resolvable by
/// name for pipeline composition.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    pub params: SymbolParams,
    pub cutoff: CutoffProfile,
    pub half: HalfLineProfile,
    /// Guard for `qinv`; composition diagnostics default this to
    /// `hbar * cutoff.inner`.
    pub qinv_guard: f64,
}

impl SymbolTable {
    pub fn new(params: SymbolParams, cutoff: CutoffProfile, half: HalfLineProfile) -> Result<Self> {
        params.validate(&cutoff)?;
        Ok(Self {
            params,
            cutoff,
            half,
            qinv_guard: params.hbar * cutoff.inner,
        })
    }

    /// Resolves a symbol name to an evaluator. Names: `D`, `p`, `b`, `P`,
    /// `R`, `C`, `T`, `laplacian`, `qinv`.
    pub fn by_name(&self, name: &str) -> Result<Box<dyn Fn([f64; 3]) -> f64 + Sync + Send + '_>> {
        let p = self.params;
        let cutoff = self.cutoff;
        let half = self.half;
        let guard = self.qinv_guard;
        Ok(match name {
            "D" => Box::new(dipole_d),
            "p" => Box::new(wave_p),
            "b" => Box::new(move |xi| cutoff_b(xi, p.hbar, &cutoff)),
            "P" => Box::new(move |xi| enhancer_p(xi, p.hbar)),
            "R" => Box::new(move |xi| {
                regularizer_r(xi, p.s, p.k_amp, RegMode::Plain, 0.0, &cutoff)
            }),
            "C" => Box::new(move |xi| lowpass_c(xi, p.big_m, p.eps_c, &cutoff)),
            "T" => Box::new(move |xi| halfwave_t(xi, &half)),
            "laplacian" => Box::new(laplacian_mult),
            "qinv" => Box::new(move |xi| q_inverse(xi, guard)),
            other => return Err(QsmError::UnknownSymbol(other.to_string())),
        })
    }
}
