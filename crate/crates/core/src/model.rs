//! Steady-state two-mode transfer functions of the probed ring cavity.
//!
//! The probe drives both counter-propagating modes of one longitudinal
//! resonance with amplitude fractions √(1±ε)/√2. The atomic Bragg grating
//! couples the two modes with strength `g_ef` and relative phase χ. The
//! squared moduli of the resulting intra-cavity amplitudes are
//!
//! ```text
//! M± = | √(1±ε)(iδ − γ) + i√(1∓ε) g e^{±iχ} |² / ( ((δ−g)² + γ²) ((δ+g)² + γ²) )
//! ```
//!
//! with δ the effective probe-cavity detuning and γ the field decay rate.
//! Any proportionality constant is left to the scale factor `S` of the
//! composite model `S·(M₊ − R·M₋)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{Spectrum, SpectrumPoint};

/// Coupling asymmetry of the reference experiment (96.5 % / 3.5 %).
pub const DEFAULT_EPSILON: f64 = 0.93;

/// Effective probe-cavity detuning δ_ef, in the same units as γ_c.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct EffectiveDetuning(pub f64);

impl From<f64> for EffectiveDetuning {
    fn from(v: f64) -> Self {
        Self(v)
    }
}

/// Wraps a phase into `[-π, π)`.
pub fn wrap_phase(x: f64) -> f64 {
    if (-PI..PI).contains(&x) {
        return x;
    }
    let two_pi = 2.0 * PI;
    let w = x - two_pi * ((x + PI) / two_pi).floor();
    if w >= PI {
        w - two_pi
    } else if w < -PI {
        w + two_pi
    } else {
        w
    }
}

/// Parameters of one model curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModelParams {
    /// Effective lattice-cavity coupling, ≥ 0.
    pub g_ef: f64,
    /// Grating phase in `[-π, π)`.
    pub chi: f64,
    /// Retroaction weight R ≥ 0.
    pub retro_r: f64,
    /// Overall scale S > 0.
    pub scale_s: f64,
    /// Coupling asymmetry ε ∈ [0, 1].
    pub epsilon: f64,
    /// Field decay rate γ_c > 0.
    pub gamma_c: f64,
}

impl SpectrumModelParams {
    /// Builds validated parameters; `chi` is wrapped into `[-π, π)`.
    pub fn new(g_ef: f64, chi: f64, retro_r: f64, scale_s: f64, epsilon: f64, gamma_c: f64) -> Result<Self> {
        let p = Self { g_ef, chi: wrap_phase(chi), retro_r, scale_s, epsilon, gamma_c };
        p.validate()?;
        Ok(p)
    }

    /// Empty-cavity parameters in γ_c-normalized units.
    pub fn empty_cavity(epsilon: f64) -> Self {
        Self { g_ef: 0.0, chi: 0.0, retro_r: 0.0, scale_s: 1.0, epsilon, gamma_c: 1.0 }
    }

    /// Checks every field invariant.
    pub fn validate(&self) -> Result<()> {
        check_eval_domain(self.epsilon, self.gamma_c)?;
        if !(self.g_ef.is_finite() && self.g_ef >= 0.0) {
            return Err(Error::invalid(format!("g_ef must be finite and >= 0, got {}", self.g_ef)));
        }
        if !(-PI..PI).contains(&self.chi) {
            return Err(Error::invalid(format!("chi must lie in [-pi, pi), got {}", self.chi)));
        }
        if !(self.retro_r.is_finite() && self.retro_r >= 0.0) {
            return Err(Error::invalid(format!("retro_r must be finite and >= 0, got {}", self.retro_r)));
        }
        if !(self.scale_s.is_finite() && self.scale_s > 0.0) {
            return Err(Error::invalid(format!("scale_s must be finite and > 0, got {}", self.scale_s)));
        }
        Ok(())
    }
}

pub(crate) fn check_eval_domain(epsilon: f64, gamma_c: f64) -> Result<()> {
    if !(gamma_c.is_finite() && gamma_c > 0.0) {
        return Err(Error::invalid(format!("gamma_c must be finite and > 0, got {gamma_c}")));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(())
}

/// Squared modulus of `a(iδ − γ) + i c g e^{iσχ}`; `sigma` is ±1.
///
/// A vanishing coefficient drops its term entirely so that the χ (or δ)
/// dependence disappears exactly rather than to rounding.
#[inline]
#[allow(clippy::too_many_arguments)]
fn numerator_sq(a: f64, c: f64, sigma: f64, delta: f64, g: f64, sin: f64, cos: f64, gamma: f64) -> f64 {
    let cg = c * g;
    if cg == 0.0 {
        return a * a * (delta * delta + gamma * gamma);
    }
    if a == 0.0 {
        return cg * cg;
    }
    // i·cg·(cos + iσ sin) = −σ cg sin + i cg cos
    let re = -a * gamma - sigma * cg * sin;
    let im = a * delta + cg * cos;
    re * re + im * im
}

/// Unchecked evaluation of (M₊, M₋). The fitter calls this with trial
/// parameters that may sit slightly outside the public invariants
/// (e.g. negative `g_ef` during central differencing).
#[inline]
pub(crate) fn m_pm_raw(delta: f64, g: f64, chi: f64, epsilon: f64, gamma: f64) -> (f64, f64) {
    let ap = (1.0 + epsilon).sqrt();
    let am = (1.0 - epsilon).max(0.0).sqrt();
    let (sin, cos) = wrap_phase(chi).sin_cos();
    let dm = delta - g;
    let dp = delta + g;
    let g2 = gamma * gamma;
    let den = (dm * dm + g2) * (dp * dp + g2);
    let np = numerator_sq(ap, am, 1.0, delta, g, sin, cos, gamma);
    let nm = numerator_sq(am, ap, -1.0, delta, g, sin, cos, gamma);
    (np / den, nm / den)
}

#[inline]
pub(crate) fn fit_model_raw(delta: f64, g: f64, chi: f64, r: f64, s: f64, epsilon: f64, gamma: f64) -> f64 {
    let (mp, mm) = m_pm_raw(delta, g, chi, epsilon, gamma);
    s * (mp - r * mm)
}

/// Steady-state intra-cavity probe intensities (M₊, M₋) up to a common
/// proportionality constant.
pub fn m_pm(delta_ef: EffectiveDetuning, p: &SpectrumModelParams) -> Result<(f64, f64)> {
    check_eval_domain(p.epsilon, p.gamma_c)?;
    Ok(m_pm_raw(delta_ef.0, p.g_ef, p.chi, p.epsilon, p.gamma_c))
}

/// Composite transmission model `S·(M₊ − R·M₋)`. Negative values are
/// legitimate when the retroaction term dominates.
pub fn fit_model(delta_ef: EffectiveDetuning, p: &SpectrumModelParams) -> Result<f64> {
    let (mp, mm) = m_pm(delta_ef, p)?;
    Ok(p.scale_s * (mp - p.retro_r * mm))
}

/// Checks that `grid` is non-empty and strictly increasing.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for (i, w) in grid.windows(2).enumerate() {
        // negated comparison also rejects NaN
        if !(w[1] > w[0]) {
            return Err(Error::NonMonotoneGrid { index: i + 1 });
        }
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("grid contains non-finite detunings"));
    }
    Ok(())
}

/// Evaluates [`fit_model`] on every point of a δ_ef grid.
pub fn model_curve(grid: &[f64], p: &SpectrumModelParams) -> Result<Spectrum> {
    check_grid(grid)?;
    check_eval_domain(p.epsilon, p.gamma_c)?;
    let points = grid
        .iter()
        .map(|&d| SpectrumPoint {
            detuning: d,
            value: fit_model_raw(d, p.g_ef, p.chi, p.retro_r, p.scale_s, p.epsilon, p.gamma_c),
            sigma: None,
        })
        .collect();
    Spectrum::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    /// Direct complex-arithmetic evaluation kept independent of `m_pm_raw`.
    fn oracle(delta: f64, g: f64, chi: f64, eps: f64, gamma: f64) -> (f64, f64) {
        let i = Complex64::i();
        let one = |s: f64| Complex64::new(s, 0.0);
        let den = (i * (delta - g) - gamma) * (i * (delta + g) - gamma);
        let base = i * delta - gamma;
        let plus = one((1.0 + eps).sqrt()) * base + i * (1.0 - eps).sqrt() * g * Complex64::from_polar(1.0, chi);
        let minus = one((1.0 - eps).sqrt()) * base + i * (1.0 + eps).sqrt() * g * Complex64::from_polar(1.0, -chi);
        ((plus / den).norm_sqr(), (minus / den).norm_sqr())
    }

    fn params(g: f64, eps: f64) -> SpectrumModelParams {
        SpectrumModelParams { g_ef: g, epsilon: eps, ..SpectrumModelParams::empty_cavity(eps) }
    }

    #[test]
    fn zero_coupling_gives_asymmetry_weights() {
        let (mp, mm) = m_pm(0.0.into(), &params(0.0, 0.93)).unwrap();
        assert!((mp - 1.93).abs() < 1e-15);
        assert!((mm - 0.07).abs() < 1e-15);
    }

    #[test]
    fn single_sided_closed_forms() {
        for &g in &[0.0, 0.3, 1.0, 4.5] {
            for &chi in &[-3.0, -0.7, 0.0, 1.2, 3.1] {
                let p = SpectrumModelParams { chi, ..params(g, 1.0) };
                let (mp, mm) = m_pm(0.0.into(), &p).unwrap();
                let d = (1.0 + g * g) * (1.0 + g * g);
                assert!((mp - 2.0 / d).abs() <= 1e-14 * (2.0 / d));
                assert!((mm - 2.0 * g * g / d).abs() <= 1e-14 * (2.0 / d) * (1.0 + g * g));
            }
        }
    }

    #[test]
    fn on_resonance_with_mode_example() {
        let (mp, _) = m_pm(2.0.into(), &params(2.0, 1.0)).unwrap();
        let (op, _) = oracle(2.0, 2.0, 0.0, 1.0, 1.0);
        assert!((mp - 10.0 / 17.0).abs() <= 1e-12 * mp);
        assert!((mp - op).abs() <= 1e-12 * op);
    }

    #[test]
    fn fit_model_examples() {
        let p = params(0.0, 0.93);
        assert!((fit_model(0.0.into(), &p).unwrap() - 1.93).abs() < 1e-15);

        let mut z = params(1.3, 0.93);
        z.scale_s = 0.0;
        for d in [-3.0, 0.0, 2.5] {
            assert_eq!(fit_model(d.into(), &z).unwrap(), 0.0);
        }

        let q = SpectrumModelParams { retro_r: 1.0, ..params(1.0, 1.0) };
        assert!(fit_model(0.0.into(), &q).unwrap().abs() < 1e-15);
    }

    #[test]
    fn invalid_domain_is_rejected() {
        let mut p = params(1.0, 0.93);
        p.gamma_c = 0.0;
        assert!(matches!(m_pm(0.0.into(), &p), Err(Error::InvalidParams(_))));
        p.gamma_c = 1.0;
        p.epsilon = 1.2;
        assert!(m_pm(0.0.into(), &p).is_err());
        p.epsilon = -0.1;
        assert!(fit_model(0.0.into(), &p).is_err());
        assert!(SpectrumModelParams::new(-1.0, 0.0, 0.0, 1.0, 0.9, 1.0).is_err());
        assert!(SpectrumModelParams::new(1.0, 0.0, -0.1, 1.0, 0.9, 1.0).is_err());
        assert!(SpectrumModelParams::new(1.0, 0.0, 0.0, 0.0, 0.9, 1.0).is_err());
    }

    #[test]
    fn chi_is_wrapped() {
        let p = SpectrumModelParams::new(1.0, 3.0 * PI, 0.0, 1.0, 0.9, 1.0).unwrap();
        assert!((p.chi + PI).abs() < 1e-12);
        assert_eq!(wrap_phase(PI), -PI);
        assert_eq!(wrap_phase(-PI), -PI);
        assert!((wrap_phase(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn model_curve_examples() {
        let mut p = params(2.0, 0.93);
        p.scale_s = 0.0;
        let s = model_curve(&[-1.0, 0.0, 1.0], &p).unwrap();
        assert!(s.values().all(|v| v == 0.0));

        let p0 = params(0.0, 0.93);
        let s = model_curve(&[0.0], &p0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.points()[0].value, fit_model(0.0.into(), &p0).unwrap());

        assert!(matches!(model_curve(&[], &p0), Err(Error::EmptyGrid)));
        assert!(matches!(model_curve(&[0.0, 1.0, 1.0], &p0), Err(Error::NonMonotoneGrid { index: 2 })));
    }

    #[test]
    fn single_sided_doublet_is_symmetric() {
        let grid: Vec<f64> = (0..2001).map(|i| -20.0 + 0.02 * i as f64).collect();
        let p = SpectrumModelParams { chi: 0.77, ..params(5.0, 1.0) };
        let s = model_curve(&grid, &p).unwrap();
        let v: Vec<f64> = s.values().collect();
        for i in 0..v.len() {
            let j = v.len() - 1 - i;
            assert!((v[i] - v[j]).abs() <= 1e-12 * v[i].abs().max(1e-300));
        }
    }

    #[test]
    fn lorentzian_limit_any_retroaction() {
        for &r in &[0.0, 0.4, 3.0] {
            let p = SpectrumModelParams { retro_r: r, scale_s: 1.7, ..params(0.0, 0.93) };
            for d in [-5.0, -1.0, 0.0, 0.3, 8.0] {
                let v = fit_model(EffectiveDetuning(d), &p).unwrap();
                let want = 1.7 * (1.93 - r * 0.07) / (d * d + 1.0);
                assert!((v - want).abs() <= 1e-14 * want.abs());
            }
        }
    }

    #[test]
    fn resonances_sit_at_plus_minus_coupling() {
        for &g in &[5.0, 10.0, 20.0] {
            let step = 1e-4;
            let n = (2.0 * (g + 3.0) / step) as usize;
            let grid: Vec<f64> = (0..=n).map(|i| -(g + 3.0) + step * i as f64).collect();
            let p = SpectrumModelParams { chi: 0.4, ..params(g, 1.0) };
            let v: Vec<f64> = model_curve(&grid, &p).unwrap().values().collect();
            let mid = v.len() / 2;
            let arg = |r: std::ops::Range<usize>| r.max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
            let lo = grid[arg(0..mid)];
            let hi = grid[arg(mid..v.len())];
            assert!((lo + g).abs() <= 1.0 / g + step, "g={g} lo={lo}");
            assert!((hi - g).abs() <= 1.0 / g + step, "g={g} hi={hi}");
        }
    }

    #[test]
    fn chi_independent_when_single_sided() {
        for &g in &[0.2, 1.0, 3.0] {
            let ref_p = SpectrumModelParams { retro_r: 0.6, ..params(g, 1.0) };
            for d in [-4.0, -0.5, 0.0, 1.5] {
                let base = m_pm(d.into(), &ref_p).unwrap();
                for k in 0..64 {
                    let chi = -PI + 2.0 * PI * k as f64 / 64.0;
                    let p = SpectrumModelParams { chi, ..ref_p };
                    assert_eq!(m_pm(d.into(), &p).unwrap(), base);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn matches_complex_oracle(
            delta in -30.0f64..30.0,
            g in 0.0f64..20.0,
            chi in -PI..PI,
            eps in 0.0f64..=1.0,
            gamma in 0.05f64..5.0,
        ) {
            let p = SpectrumModelParams { g_ef: g, chi, retro_r: 0.0, scale_s: 1.0, epsilon: eps, gamma_c: gamma };
            let (mp, mm) = m_pm(delta.into(), &p).unwrap();
            let (op, om) = oracle(delta, g, chi, eps, gamma);
            prop_assert!(mp >= 0.0 && mm >= 0.0);
            prop_assert!((mp - op).abs() <= 1e-12 * op, "{} vs {}", mp, op);
            prop_assert!((mm - om).abs() <= 1e-12 * om, "{} vs {}", mm, om);
        }

        #[test]
        fn periodic_in_chi(delta in -10.0f64..10.0, g in 0.0f64..8.0, chi in -PI..PI, r in 0.0f64..2.0) {
            let p = SpectrumModelParams { g_ef: g, chi, retro_r: r, scale_s: 1.0, epsilon: 0.93, gamma_c: 1.0 };
            let q = SpectrumModelParams { chi: chi + 2.0 * PI, ..p };
            let a = fit_model(delta.into(), &p).unwrap();
            let b = fit_model(delta.into(), &q).unwrap();
            let (mp, mm) = m_pm(delta.into(), &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-13 * (mp + r * mm));
        }
    }
}
