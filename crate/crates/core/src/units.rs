//! Conversion between external frequency units and the internal axis.
//!
//! Internally every frequency is an angular frequency divided by the cavity
//! field decay rate γ_c, so the empty-cavity resonance has half width 1.
//! Files and the command line speak ordinary frequency in kHz. With
//! γ_c = π·Δν (Δν the full linewidth in Hz) one internal unit equals Δν/2.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empty-cavity full linewidth of the reference resonator, in kHz.
pub const REFERENCE_LINEWIDTH_KHZ: f64 = 17.5;

/// Field decay rate γ_c = π·17.5 kHz, in rad/s.
pub fn reference_gamma_c() -> f64 {
    PI * REFERENCE_LINEWIDTH_KHZ * 1e3
}

/// Axis convention used when reading or writing spectra.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    GammaCNormalized,
    #[default]
    Khz,
}

/// Maps kHz to γ_c-normalized angular frequency and back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitScale {
    linewidth_khz: f64,
}

impl UnitScale {
    pub fn from_linewidth_khz(linewidth_khz: f64) -> Result<Self> {
        if !(linewidth_khz.is_finite() && linewidth_khz > 0.0) {
            return Err(Error::invalid(format!("linewidth must be positive and finite, got {linewidth_khz}")));
        }
        Ok(Self { linewidth_khz })
    }

    /// Scale for a cavity whose field decay rate is `gamma_c` rad/s.
    pub fn from_gamma_c(gamma_c: f64) -> Result<Self> {
        Self::from_linewidth_khz(gamma_c / PI * 1e-3)
    }

    pub fn linewidth_khz(&self) -> f64 {
        self.linewidth_khz
    }

    /// γ_c in rad/s.
    pub fn gamma_c(&self) -> f64 {
        PI * self.linewidth_khz * 1e3
    }

    /// kHz per internal unit.
    pub fn khz_per_unit(&self) -> f64 {
        0.5 * self.linewidth_khz
    }

    pub fn khz_to_internal(&self, f_khz: f64) -> f64 {
        f_khz / self.khz_per_unit()
    }

    pub fn internal_to_khz(&self, x: f64) -> f64 {
        x * self.khz_per_unit()
    }

    /// Converts an angular frequency in rad/s into internal units.
    pub fn angular_to_internal(&self, omega: f64) -> f64 {
        omega / self.gamma_c()
    }
}

impl Default for UnitScale {
    fn default() -> Self {
        Self { linewidth_khz: REFERENCE_LINEWIDTH_KHZ }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_linewidth_is_two_units() {
        let u = UnitScale::default();
        assert_eq!(u.khz_to_internal(17.5), 2.0);
        assert!((u.gamma_c() - reference_gamma_c()).abs() < 1e-9);
        let v = UnitScale::from_gamma_c(reference_gamma_c()).unwrap();
        assert!((v.linewidth_khz() - 17.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_linewidth() {
        assert!(UnitScale::from_linewidth_khz(0.0).is_err());
        assert!(UnitScale::from_linewidth_khz(f64::NAN).is_err());
    }
}
