use serde::{Deserialize, Serialize};

use super::{fit_spectrum, FitConfig, FitResult, FitStart};
use crate::error::{Error, Result};
use crate::spectrum::{Spectrum, META_TRACE};

#[derive(Clone, Debug)]
pub struct BatchRow {
    pub n_atoms: u64,
    /// Position of the spectrum in the caller's list.
    pub source_index: usize,
    /// Trace label from the spectrum metadata, if any.
    pub trace: Option<String>,
    pub outcome: std::result::Result<FitResult, String>,
}

impl BatchRow {
    /// g_ef ≤ γ_c: the phase χ is not expected to be reliable.
    pub fn below_threshold(&self, gamma_c: f64) -> Option<bool> {
        self.outcome.as_ref().ok().map(|f| f.params.g_ef <= gamma_c)
    }
}

/// Fits every spectrum in ascending atom number, warm-starting each fit
/// from the previous successful one in addition to the usual multi-start.
/// A failing trace is recorded and does not stop the batch.
pub fn batch_fit(series: &[Spectrum], cfg: &FitConfig) -> Result<Vec<BatchRow>> {
    if series.is_empty() {
        return Err(Error::invalid("series is empty"));
    }
    cfg.validate()?;
    let mut order = Vec::with_capacity(series.len());
    for (i, s) in series.iter().enumerate() {
        let n = s.n_atoms().ok_or(Error::MissingAtomNumber { index: i })?;
        order.push((n, i));
    }
    order.sort();

    let mut warm: Option<FitStart> = None;
    let mut rows = Vec::with_capacity(order.len());
    for (n, i) in order {
        let outcome = fit_spectrum(&series[i], cfg, warm.as_ref());
        match &outcome {
            Ok(fit) => warm = Some(fit.as_start()),
            Err(e) => log::warn!("trace {i} (N = {n}) failed: {e}"),
        }
        rows.push(BatchRow {
            n_atoms: n,
            source_index: i,
            trace: series[i].meta.get(META_TRACE).cloned(),
            outcome: outcome.map_err(|e| e.to_string()),
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_sigma: f64,
    pub intercept_sigma: f64,
    pub n: usize,
}

/// Ordinary least squares of y on x.
pub fn linear_regression(points: &[(f64, f64)]) -> Result<Regression> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateAbscissa);
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if ss_res == 0.0 || syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let (slope_sigma, intercept_sigma) = if n > 2 {
        let s2 = ss_res / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(Regression { slope, intercept, r_squared, slope_sigma, intercept_sigma, n })
}

/// Regression of fitted g_ef on N over the successful rows.
pub fn regress_gef_vs_n(rows: &[BatchRow]) -> Result<Regression> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.outcome.as_ref().ok().map(|f| (r.n_atoms as f64, f.params.g_ef))).collect();
    linear_regression(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<(f64, f64)> = (0..11).map(|i| (i as f64 * 2.8e5, 6.7e-7 * i as f64 * 2.8e5)).collect();
        let r = linear_regression(&pts).unwrap();
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert!((r.slope / 6.7e-7 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_points_interpolate() {
        let r = linear_regression(&[(1.0, 3.0), (3.0, 7.0)]).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-15);
        assert!((r.intercept - 1.0).abs() < 1e-15);
        assert_eq!(r.r_squared, 1.0);
    }

    #[test]
    fn degenerate_abscissa() {
        assert!(matches!(linear_regression(&[(1.0, 3.0), (1.0, 7.0)]), Err(Error::DegenerateAbscissa)));
        assert!(matches!(linear_regression(&[(1.0, 3.0)]), Err(Error::DegenerateAbscissa)));
    }

    #[test]
    fn missing_atom_number_is_an_error() {
        let s = Spectrum::from_xy(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!(matches!(batch_fit(&[s], &FitConfig::default()), Err(Error::MissingAtomNumber { index: 0 })));
    }
}
