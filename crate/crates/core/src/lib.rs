//! Probe-transmission spectra of an optical lattice inside a high-finesse
//! ring cavity.
//!
//! The crate evaluates the steady-state two-mode transfer model
//! ([`model`]), derives couplings and normal-mode positions from physical
//! inputs ([`physics`]), generates synthetic traces ([`synth`]), recovers the
//! model parameters by bounded Levenberg-Marquardt ([`fit`]) and provides
//! model-free cross-checks ([`analysis`]). [`io`] holds the file formats.
//!
//! Numerics work in angular frequency divided by the cavity field decay
//! rate γ_c; see [`units`].

// `!(a < b)` is used on purpose so NaN inputs fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fit;
pub mod io;
pub mod model;
pub mod physics;
pub mod spectrum;
pub mod synth;
pub mod units;

pub use error::{Error, Result};
pub use fit::{FitConfig, FitResult, FitStart};
pub use model::{EffectiveDetuning, SpectrumModelParams};
pub use physics::{AtomCouplingParams, CavityParams};
pub use spectrum::{Spectrum, SpectrumPoint};
pub use synth::{NoiseKind, NoiseSpec, TraceModel};
pub use units::{UnitScale, Units};
