use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Metadata key carrying the atom number of a trace.
pub const META_N_ATOMS: &str = "n_atoms";
/// Metadata key carrying the position of a trace within a series.
pub const META_TRACE: &str = "trace";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumPoint {
    pub detuning: f64,
    pub value: f64,
    pub sigma: Option<f64>,
}

impl SpectrumPoint {
    pub fn new(detuning: f64, value: f64) -> Self {
        Self { detuning, value, sigma: None }
    }
}

/// One transmission trace: detuning-ordered samples plus free-form
/// annotations.
///
/// Detunings are strictly increasing. Either every point carries a positive
/// uncertainty or none does.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Spectrum {
    points: Vec<SpectrumPoint>,
    pub meta: BTreeMap<String, String>,
}

impl Spectrum {
    pub fn new(points: Vec<SpectrumPoint>) -> Result<Self> {
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].detuning > w[0].detuning) {
                return Err(Error::NonMonotoneGrid { index: i + 1 });
            }
        }
        if let Some(first) = points.first() {
            let with_sigma = first.sigma.is_some();
            for (i, p) in points.iter().enumerate() {
                if p.sigma.is_some() != with_sigma {
                    return Err(Error::MixedSigma { index: i });
                }
                if let Some(s) = p.sigma {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::invalid(format!("sigma at index {i} must be positive, got {s}")));
                    }
                }
                if !p.detuning.is_finite() {
                    return Err(Error::invalid(format!("non-finite detuning at index {i}")));
                }
            }
        }
        Ok(Self { points, meta: BTreeMap::new() })
    }

    /// Builds a spectrum from parallel detuning/value slices.
    pub fn from_xy(detunings: &[f64], values: &[f64]) -> Result<Self> {
        if detunings.len() != values.len() {
            return Err(Error::invalid("detuning and value columns differ in length"));
        }
        Self::new(detunings.iter().zip(values).map(|(&d, &v)| SpectrumPoint::new(d, v)).collect())
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub fn points(&self) -> &[SpectrumPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_sigma(&self) -> bool {
        self.points.first().is_some_and(|p| p.sigma.is_some())
    }

    pub fn detunings(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.detuning)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.value)
    }

    /// Per-point uncertainty, 1 where absent.
    pub fn weights_sigma(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.sigma.unwrap_or(1.0))
    }

    pub fn n_atoms(&self) -> Option<u64> {
        self.meta.get(META_N_ATOMS).and_then(|v| v.trim().parse().ok())
    }

    /// Returns a copy with every value mapped through `f`.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let points = self.points.iter().map(|p| SpectrumPoint { value: f(p.value), ..*p }).collect();
        Self { points, meta: self.meta.clone() }
    }

    /// Attaches the same uncertainty to every point.
    pub fn with_uniform_sigma(&self, sigma: f64) -> Result<Self> {
        let points = self.points.iter().map(|p| SpectrumPoint { sigma: Some(sigma), ..*p }).collect();
        let mut s = Self::new(points)?;
        s.meta = self.meta.clone();
        Ok(s)
    }
}
