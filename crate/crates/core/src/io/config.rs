use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitConfig;
use crate::io::{read_text, write_atomic};
use crate::physics::{detuning_from_wavelength_shift, AtomCouplingParams, CavityParams};
use crate::synth::{NoiseSpec, TraceModel, REFERENCE_LADDER};
use crate::units::{UnitScale, Units, REFERENCE_LINEWIDTH_KHZ};

/// Cavity description in laboratory units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavitySection {
    /// Empty-cavity full linewidth; γ_c = π × linewidth.
    pub linewidth_khz: f64,
    pub finesse: f64,
    pub round_trip_mm: f64,
    pub fsr_ghz: f64,
    pub waist_um: f64,
    /// Relative path-length mismatch between the two probe beams; bounds
    /// how far χ may sit from zero at N = 0. Informational only.
    pub path_asymmetry: f64,
}

impl Default for CavitySection {
    fn default() -> Self {
        Self {
            linewidth_khz: REFERENCE_LINEWIDTH_KHZ,
            finesse: 1.8e5,
            round_trip_mm: 97.0,
            fsr_ghz: 3.1,
            waist_um: 130.0,
            path_asymmetry: 0.02,
        }
    }
}

impl CavitySection {
    pub fn params(&self) -> Result<CavityParams> {
        CavityParams::new(
            PI * self.linewidth_khz * 1e3,
            self.finesse,
            self.round_trip_mm * 1e-3,
            self.fsr_ghz * 1e9,
            self.waist_um * 1e-6,
        )
    }

    pub fn unit_scale(&self) -> Result<UnitScale> {
        UnitScale::from_linewidth_khz(self.linewidth_khz)
    }
}

/// Lattice and coupling description in laboratory units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomsSection {
    /// Resonant single-atom coupling in units of γ_c.
    pub g0_over_gamma_c: f64,
    /// Natural linewidth Γ/2π.
    pub gamma_atom_mhz: f64,
    /// Lattice wavelength offset to the red of the line.
    pub red_detuning_nm: f64,
    pub wavelength_nm: f64,
    pub n_atoms: u64,
    pub xi_rad: f64,
    pub xi_ax: f64,
}

impl Default for AtomsSection {
    fn default() -> Self {
        Self {
            g0_over_gamma_c: 0.67,
            gamma_atom_mhz: 6.07,
            red_detuning_nm: 0.7,
            wavelength_nm: 780.24,
            n_atoms: 0,
            xi_rad: 0.95,
            xi_ax: 0.12,
        }
    }
}

impl AtomsSection {
    pub fn params(&self, cavity: &CavityParams) -> Result<AtomCouplingParams> {
        let p = AtomCouplingParams {
            g0: self.g0_over_gamma_c * cavity.gamma_c,
            gamma_atom: 2.0 * PI * self.gamma_atom_mhz * 1e6,
            delta_atom: detuning_from_wavelength_shift(self.red_detuning_nm * 1e-9, self.wavelength_nm * 1e-9),
            n_atoms: self.n_atoms,
            xi_rad: self.xi_rad,
            xi_ax: self.xi_ax,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub points: usize,
    /// Padding around the outermost normal modes, in units of γ_c.
    pub margin: f64,
    pub ladder: Vec<u64>,
    pub noise: NoiseSpec,
    pub trace: TraceModel,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            points: 801,
            margin: 6.0,
            ladder: REFERENCE_LADDER.to_vec(),
            noise: NoiseSpec { kind: crate::synth::NoiseKind::Gaussian, sigma_abs: 0.01, seed: 2005 },
            trace: TraceModel::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub units: Units,
    pub cavity: CavitySection,
    pub atoms: AtomsSection,
    pub fit: FitConfig,
    pub synth: SynthSection,
}

impl RunConfig {
    /// Checks every embedded invariant, naming the first offending key.
    pub fn check(&self) -> std::result::Result<(), (String, String)> {
        let positive = |k: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err((k.to_string(), format!("{v} must be positive")))
            }
        };
        let unit = |k: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err((k.to_string(), format!("{v} is outside [0, 1]")))
            }
        };
        positive("cavity.linewidth_khz", self.cavity.linewidth_khz)?;
        positive("cavity.finesse", self.cavity.finesse)?;
        positive("cavity.round_trip_mm", self.cavity.round_trip_mm)?;
        positive("cavity.fsr_ghz", self.cavity.fsr_ghz)?;
        positive("cavity.waist_um", self.cavity.waist_um)?;
        unit("cavity.path_asymmetry", self.cavity.path_asymmetry)?;
        if !self.atoms.g0_over_gamma_c.is_finite() {
            return Err(("atoms.g0_over_gamma_c".into(), "must be finite".into()));
        }
        positive("atoms.gamma_atom_mhz", self.atoms.gamma_atom_mhz)?;
        positive("atoms.wavelength_nm", self.atoms.wavelength_nm)?;
        if !self.atoms.red_detuning_nm.is_finite() {
            return Err(("atoms.red_detuning_nm".into(), "must be finite".into()));
        }
        unit("atoms.xi_rad", self.atoms.xi_rad)?;
        unit("atoms.xi_ax", self.atoms.xi_ax)?;
        self.fit.check().map_err(|(k, m)| (format!("fit.{k}"), m))?;
        if self.synth.points < 2 {
            return Err(("synth.points".into(), "must be at least 2".into()));
        }
        if !(self.synth.margin.is_finite() && self.synth.margin >= 0.0) {
            return Err(("synth.margin".into(), format!("{} must be >= 0", self.synth.margin)));
        }
        if self.synth.ladder.is_empty() {
            return Err(("synth.ladder".into(), "must list at least one atom number".into()));
        }
        let n = &self.synth.noise;
        if !(n.sigma_abs.is_finite() && n.sigma_abs >= 0.0) {
            return Err(("synth.noise.sigma_abs".into(), format!("{} must be >= 0", n.sigma_abs)));
        }
        let t = &self.synth.trace;
        unit("synth.trace.epsilon", t.epsilon)?;
        positive("synth.trace.scale_s", t.scale_s)?;
        if !t.chi.is_finite() {
            return Err(("synth.trace.chi".into(), "must be finite".into()));
        }
        if !(t.retro_per_million.is_finite() && t.retro_per_million >= 0.0) {
            return Err(("synth.trace.retro_per_million".into(), format!("{} must be >= 0", t.retro_per_million)));
        }
        Ok(())
    }

    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { path: source.to_string(), line, msg: e.message().to_string() }
        })?;
        cfg.check().map_err(|(key, msg)| Error::Schema { path: source.to_string(), key, msg })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
    }

    pub fn cavity_params(&self) -> Result<CavityParams> {
        self.cavity.params()
    }

    pub fn atom_params(&self) -> Result<AtomCouplingParams> {
        self.atoms.params(&self.cavity.params()?)
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    RunConfig::from_toml(&read_text(path)?, &path.display().to_string())
}

pub fn write_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    write_atomic(path, cfg.to_toml()?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml("", "x").unwrap(), RunConfig::default());
    }

    #[test]
    fn out_of_range_epsilon_names_key() {
        let err = RunConfig::from_toml("[fit]\nepsilon_fixed = 1.5\n", "cfg.toml").unwrap_err();
        match err {
            Error::Schema { key, .. } => assert_eq!(key, "fit.epsilon_fixed"),
            other => panic!("{other:?}"),
        }
        let err = RunConfig::from_toml("[synth.trace]\nepsilon = 1.5\n", "cfg.toml").unwrap_err();
        assert!(matches!(err, Error::Schema { ref key, .. } if key == "synth.trace.epsilon"));
    }

    #[test]
    fn unknown_key_reports_location() {
        let err = RunConfig::from_toml("[cavity]\nfinesse = 2.0\nbogus = 1\n", "cfg.toml").unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text, "x").unwrap(), cfg);
    }

    #[test]
    fn reference_physics() {
        let cfg = RunConfig::default();
        let cav = cfg.cavity_params().unwrap();
        assert_eq!(cav, CavityParams::reference());
        let atoms = cfg.atom_params().unwrap();
        let r = AtomCouplingParams::reference();
        assert!((atoms.delta_atom / r.delta_atom - 1.0).abs() < 1e-14);
        assert!((atoms.g0 / r.g0 - 1.0).abs() < 1e-14);
        assert!((atoms.gamma_atom / r.gamma_atom - 1.0).abs() < 1e-14);
    }
}
