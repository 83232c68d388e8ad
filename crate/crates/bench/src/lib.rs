//! Fixtures shared by the criterion benchmarks.

use cavlattice::model::model_curve;
use cavlattice::{Spectrum, SpectrumModelParams};

pub fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn doublet_params() -> SpectrumModelParams {
    SpectrumModelParams::new(3.0, 0.4, 0.2, 1.0, 0.93, 1.0).expect("valid parameters")
}

/// Noiseless 801-point doublet used by the fit benchmarks.
pub fn doublet_spectrum() -> Spectrum {
    model_curve(&grid(801, -9.0, 9.0), &doublet_params()).expect("valid grid")
}
