//! Synthetic transmission traces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_eval_domain, check_grid, fit_model_raw, SpectrumModelParams, DEFAULT_EPSILON};
use crate::physics::{effective_params, normal_mode_shifts, AtomCouplingParams, CavityParams};
use crate::spectrum::{Spectrum, SpectrumPoint, META_N_ATOMS, META_TRACE};

/// Atom numbers of the eleven-trace ladder, 0 to 2.76 million.
pub const REFERENCE_LADDER: [u64; 11] =
    [0, 280_000, 550_000, 830_000, 1_100_000, 1_380_000, 1_660_000, 1_930_000, 2_210_000, 2_480_000, 2_760_000];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Standard deviation in model-value units.
    pub sigma_abs: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, sigma_abs: 0.0, seed: 0 }
    }

    pub fn gaussian(sigma_abs: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::Gaussian, sigma_abs, seed }
    }

    fn is_active(&self) -> bool {
        self.kind == NoiseKind::Gaussian && self.sigma_abs > 0.0
    }

    /// Same noise model on an independent stream for trace `index`.
    pub fn for_trace(&self, index: usize) -> Self {
        Self { seed: mix_seed(self.seed, index as u64), ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_abs.is_finite() && self.sigma_abs >= 0.0) {
            return Err(Error::invalid(format!("sigma_abs must be >= 0, got {}", self.sigma_abs)));
        }
        Ok(())
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

// splitmix64 finalizer
fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples the model on `grid` shifted by `offset` (model evaluated at
/// `grid_i − offset`) and adds noise. Detunings of the result are `grid`.
fn sample(grid: &[f64], offset: f64, p: &SpectrumModelParams, noise: &NoiseSpec) -> Result<Spectrum> {
    check_grid(grid)?;
    check_eval_domain(p.epsilon, p.gamma_c)?;
    noise.validate()?;
    let clean =
        grid.iter().map(|&x| fit_model_raw(x - offset, p.g_ef, p.chi, p.retro_r, p.scale_s, p.epsilon, p.gamma_c));
    let points = if noise.is_active() {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let normal = Normal::new(0.0, noise.sigma_abs).map_err(|e| Error::invalid(e.to_string()))?;
        grid.iter()
            .zip(clean)
            .map(|(&d, v)| SpectrumPoint {
                detuning: d,
                value: v + normal.sample(&mut rng),
                sigma: Some(noise.sigma_abs),
            })
            .collect()
    } else {
        grid.iter().zip(clean).map(|(&d, v)| SpectrumPoint::new(d, v)).collect()
    };
    Spectrum::new(points)
}

/// Model curve on a δ_ef grid plus optional additive Gaussian noise.
///
/// Noisy spectra carry `sigma_abs` as their per-point uncertainty.
pub fn generate_spectrum(grid: &[f64], p: &SpectrumModelParams, noise: &NoiseSpec) -> Result<Spectrum> {
    sample(grid, 0.0, p, noise)
}

/// How the non-physical model parameters vary along a series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceModel {
    pub chi: f64,
    pub scale_s: f64,
    pub epsilon: f64,
    /// R per million atoms, applied only to traces with g_ef > γ_c.
    pub retro_per_million: f64,
}

impl Default for TraceModel {
    fn default() -> Self {
        Self { chi: 0.3, scale_s: 1.0, epsilon: DEFAULT_EPSILON, retro_per_million: 0.1 }
    }
}

impl TraceModel {
    pub fn retroaction(&self, n_atoms: u64, g_ef: f64) -> f64 {
        if g_ef > 1.0 {
            self.retro_per_million * n_atoms as f64 * 1e-6
        } else {
            0.0
        }
    }
}

/// Generator truth for one trace on the normalized δ_c axis: the x-axis
/// offset N g_δ ξ_rad / γ_c and the model parameters.
pub fn trace_params(
    n_atoms: u64,
    base: &AtomCouplingParams,
    cav: &CavityParams,
    trace: &TraceModel,
) -> Result<(f64, SpectrumModelParams)> {
    let atoms = base.with_atoms(n_atoms);
    atoms.validate()?;
    let (delta_ef, g_ef) = effective_params(&atoms, 0.0);
    let offset = -delta_ef.0 / cav.gamma_c;
    let g_ef = g_ef / cav.gamma_c;
    let p =
        SpectrumModelParams::new(g_ef, trace.chi, trace.retroaction(n_atoms, g_ef), trace.scale_s, trace.epsilon, 1.0)?;
    Ok((offset, p))
}

/// Evenly spaced normalized δ_c grid spanning both normal modes of every
/// trace from N = 0 to `n_max`, padded by `margin` on either side.
pub fn default_grid(
    n_max: u64,
    base: &AtomCouplingParams,
    cav: &CavityParams,
    points: usize,
    margin: f64,
) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    let (lo, hi) = normal_mode_shifts(&base.with_atoms(n_max));
    let start = (lo / cav.gamma_c).min(0.0) - margin;
    let stop = (hi / cav.gamma_c).max(0.0) + margin;
    let step = (stop - start) / (points - 1) as f64;
    Ok((0..points).map(|i| start + step * i as f64).collect())
}

/// One spectrum per atom number, on the shared normalized δ_c `grid`.
///
/// Trace `k` draws noise from its own stream derived from the seed and `k`.
pub fn generate_series(
    n_list: &[u64],
    base: &AtomCouplingParams,
    cav: &CavityParams,
    grid: &[f64],
    trace: &TraceModel,
    noise: &NoiseSpec,
) -> Result<Vec<Spectrum>> {
    if n_list.is_empty() {
        return Err(Error::invalid("atom-number list is empty"));
    }
    n_list
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let (offset, p) = trace_params(n, base, cav, trace)?;
            Ok(sample(grid, offset, &p, &noise.for_trace(k))?.with_meta(META_N_ATOMS, n).with_meta(META_TRACE, k + 1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::model_curve;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_equals_model_curve() {
        let p = SpectrumModelParams::new(2.0, 0.4, 0.2, 1.3, 0.93, 1.0).unwrap();
        let g = grid(101, -8.0, 8.0);
        assert_eq!(generate_spectrum(&g, &p, &NoiseSpec::none()).unwrap(), model_curve(&g, &p).unwrap());
        let zero = NoiseSpec::gaussian(0.0, 9);
        assert_eq!(generate_spectrum(&g, &p, &zero).unwrap(), model_curve(&g, &p).unwrap());
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let p = SpectrumModelParams::new(2.0, 0.4, 0.2, 1.3, 0.93, 1.0).unwrap();
        let g = grid(201, -8.0, 8.0);
        let a = generate_spectrum(&g, &p, &NoiseSpec::gaussian(0.05, 17)).unwrap();
        let b = generate_spectrum(&g, &p, &NoiseSpec::gaussian(0.05, 17)).unwrap();
        let c = generate_spectrum(&g, &p, &NoiseSpec::gaussian(0.05, 18)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_standard_deviation() {
        let mut p = SpectrumModelParams::empty_cavity(0.93);
        p.scale_s = 0.0;
        let g = grid(100_000, -1.0, 1.0);
        let s = generate_spectrum(&g, &p, &NoiseSpec::gaussian(0.25, 3)).unwrap();
        let n = s.len() as f64;
        let mean = s.values().sum::<f64>() / n;
        let var = s.values().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() / 0.25 - 1.0).abs() < 0.02);
    }

    #[test]
    fn empty_cavity_series_is_a_lorentzian() {
        let atoms = AtomCouplingParams::reference();
        let cav = CavityParams::reference();
        let g = grid(81, -6.0, 6.0);
        let s = generate_series(&[0], &atoms, &cav, &g, &TraceModel::default(), &NoiseSpec::none()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].n_atoms(), Some(0));
        for p in s[0].points() {
            let want = 1.93 / (p.detuning * p.detuning + 1.0);
            assert!((p.value - want).abs() < 1e-14);
        }
    }

    #[test]
    fn doubling_atoms_doubles_splitting() {
        let atoms = AtomCouplingParams::reference();
        let cav = CavityParams::reference();
        let t = TraceModel::default();
        for n in [280_000u64, 1_100_000, 1_380_000] {
            let (o1, p1) = trace_params(n, &atoms, &cav, &t).unwrap();
            let (o2, p2) = trace_params(2 * n, &atoms, &cav, &t).unwrap();
            assert!((p2.g_ef / p1.g_ef - 2.0).abs() < 1e-14);
            assert!((o2 / o1 - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn retroaction_only_above_threshold() {
        let atoms = AtomCouplingParams::reference();
        let cav = CavityParams::reference();
        let t = TraceModel::default();
        for &n in &REFERENCE_LADDER {
            let (_, p) = trace_params(n, &atoms, &cav, &t).unwrap();
            assert_eq!(p.retro_r > 0.0, p.g_ef > 1.0);
        }
    }

    #[test]
    fn default_grid_covers_both_modes() {
        let atoms = AtomCouplingParams::reference();
        let cav = CavityParams::reference();
        let g = default_grid(2_760_000, &atoms, &cav, 801, 6.0).unwrap();
        assert_eq!(g.len(), 801);
        let (lo, hi) = normal_mode_shifts(&atoms.with_atoms(2_760_000));
        assert!(g[0] <= lo / cav.gamma_c - 6.0 + 1e-9);
        assert!(*g.last().unwrap() >= 6.0 - 1e-9);
        assert!(hi / cav.gamma_c < *g.last().unwrap());
    }

    #[test]
    fn rejects_bad_grids() {
        let p = SpectrumModelParams::empty_cavity(0.93);
        assert!(matches!(generate_spectrum(&[], &p, &NoiseSpec::none()), Err(Error::EmptyGrid)));
        assert!(matches!(generate_spectrum(&[1.0, 0.0], &p, &NoiseSpec::none()), Err(Error::NonMonotoneGrid { .. })));
    }
}
