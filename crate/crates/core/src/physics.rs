//! Coupling strengths and normal-mode positions from physical inputs.
//!
//! All frequencies here are angular frequencies in rad/s. Divide by
//! [`CavityParams::gamma_c`] to obtain the normalized units used by
//! [`crate::model`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EffectiveDetuning;
use crate::units::reference_gamma_c;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rb D2 line natural linewidth Γ/2π in Hz.
pub const RB_D2_LINEWIDTH_HZ: f64 = 6.07e6;
/// Rb D2 vacuum wavelength in m.
pub const RB_D2_WAVELENGTH_M: f64 = 780.24e-9;

/// Angular detuning of a laser displaced by `red_shift_m` to longer
/// wavelength from a line at `wavelength_m`. Red detuning is negative.
pub fn detuning_from_wavelength_shift(red_shift_m: f64, wavelength_m: f64) -> f64 {
    -2.0 * PI * SPEED_OF_LIGHT * red_shift_m / (wavelength_m * wavelength_m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Field decay rate γ_c, rad/s.
    pub gamma_c: f64,
    pub finesse: f64,
    pub round_trip_m: f64,
    /// Free spectral range, Hz.
    pub fsr: f64,
    pub waist_m: f64,
}

impl CavityParams {
    pub fn new(gamma_c: f64, finesse: f64, round_trip_m: f64, fsr: f64, waist_m: f64) -> Result<Self> {
        let c = Self { gamma_c, finesse, round_trip_m, fsr, waist_m };
        c.validate()?;
        Ok(c)
    }

    /// The 97 mm ring resonator with F = 1.8e5 and 17.5 kHz linewidth.
    pub fn reference() -> Self {
        Self { gamma_c: reference_gamma_c(), finesse: 1.8e5, round_trip_m: 0.097, fsr: 3.1e9, waist_m: 130e-6 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_c", self.gamma_c),
            ("finesse", self.finesse),
            ("round_trip_m", self.round_trip_m),
            ("fsr", self.fsr),
            ("waist_m", self.waist_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("cavity {name} must be positive, got {v}")));
            }
        }
        let mismatch = self.fsr_mismatch();
        if mismatch > 0.01 {
            log::warn!(
                "free spectral range {:.4e} Hz differs from c/L = {:.4e} Hz by {:.2}%",
                self.fsr,
                SPEED_OF_LIGHT / self.round_trip_m,
                100.0 * mismatch
            );
        }
        Ok(())
    }

    /// Relative deviation of `fsr` from c / round trip length.
    pub fn fsr_mismatch(&self) -> f64 {
        let expected = SPEED_OF_LIGHT / self.round_trip_m;
        (self.fsr - expected).abs() / expected
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomCouplingParams {
    /// Resonant single-atom coupling g₀ = ω₀²/2Γ, rad/s.
    pub g0: f64,
    /// Atomic spontaneous decay rate Γ, rad/s.
    pub gamma_atom: f64,
    /// Laser-atom detuning δ, rad/s (negative = red).
    pub delta_atom: f64,
    pub n_atoms: u64,
    /// Radial overlap of the cloud with the mode, in [0, 1].
    pub xi_rad: f64,
    /// Axial Debye-Waller factor, in [0, 1].
    pub xi_ax: f64,
}

impl AtomCouplingParams {
    /// Rb-85 lattice 0.7 nm red of the D2 line with g₀ = 0.67 γ_c.
    ///
    /// ξ_rad and ξ_ax are not measured quantities; the defaults put the
    /// strong-coupling onset near 1.5 million atoms.
    pub fn reference() -> Self {
        Self {
            g0: 0.67 * reference_gamma_c(),
            gamma_atom: 2.0 * PI * RB_D2_LINEWIDTH_HZ,
            delta_atom: detuning_from_wavelength_shift(0.7e-9, RB_D2_WAVELENGTH_M),
            n_atoms: 0,
            xi_rad: 0.95,
            xi_ax: 0.12,
        }
    }

    pub fn with_atoms(self, n_atoms: u64) -> Self {
        Self { n_atoms, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.g0.is_finite() {
            return Err(Error::invalid("g0 must be finite"));
        }
        if !(self.gamma_atom.is_finite() && self.gamma_atom > 0.0) {
            return Err(Error::invalid(format!("gamma_atom must be positive, got {}", self.gamma_atom)));
        }
        if !self.delta_atom.is_finite() {
            return Err(Error::invalid("delta_atom must be finite"));
        }
        for (name, v) in [("xi_rad", self.xi_rad), ("xi_ax", self.xi_ax)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Single-atom coupling at detuning δ, g_δ = g₀ / √(1 + 4(δ/Γ)²).
pub fn coupling_detuned(p: &AtomCouplingParams) -> f64 {
    p.g0 / (2.0 * p.delta_atom / p.gamma_atom).hypot(1.0)
}

/// g_δ carrying the sign of δ, so that red detuning lowers the mode
/// frequencies.
pub fn coupling_signed(p: &AtomCouplingParams) -> f64 {
    let g = coupling_detuned(p);
    if p.delta_atom < 0.0 {
        -g
    } else {
        g
    }
}

/// Far-detuned light shift per photon ω₀²/4δ = g₀Γ/2δ.
pub fn light_shift_per_photon(p: &AtomCouplingParams) -> Result<f64> {
    if p.delta_atom == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(p.g0 * p.gamma_atom / (2.0 * p.delta_atom))
}

/// Maps the probe-cavity detuning δ_c to (δ_ef, g_ef).
///
/// δ_ef = δ_c − N g_δ ξ_rad with signed g_δ; g_ef = |N g_δ ξ_rad ξ_ax|.
pub fn effective_params(p: &AtomCouplingParams, delta_c: f64) -> (EffectiveDetuning, f64) {
    let forward = p.n_atoms as f64 * coupling_signed(p) * p.xi_rad;
    (EffectiveDetuning(delta_c - forward), (forward * p.xi_ax).abs())
}

/// Uniform shift N g_δ ξ_rad of both traveling-wave modes.
pub fn forward_shift(p: &AtomCouplingParams) -> f64 {
    p.n_atoms as f64 * coupling_signed(p) * p.xi_rad
}

/// Positions N g_δ ξ_rad (1 ± ξ_ax) of the two normal modes on the δ_c
/// axis, lower first.
pub fn normal_mode_shifts(p: &AtomCouplingParams) -> (f64, f64) {
    let forward = forward_shift(p);
    let g_ef = (forward * p.xi_ax).abs();
    (forward - g_ef, forward + g_ef)
}

/// Smallest atom number whose effective coupling exceeds γ_c.
pub fn scc_threshold(p: &AtomCouplingParams, cav: &CavityParams) -> Result<u64> {
    let per_atom = coupling_detuned(p).abs() * p.xi_rad * p.xi_ax;
    if !(per_atom > 0.0 && per_atom.is_finite()) {
        return Err(Error::NonPositiveCoupling);
    }
    let mut n = (cav.gamma_c / per_atom).floor().max(0.0) as u64 + 1;
    while n as f64 * per_atom <= cav.gamma_c {
        n += 1;
    }
    while n > 1 && (n - 1) as f64 * per_atom > cav.gamma_c {
        n -= 1;
    }
    Ok(n)
}
