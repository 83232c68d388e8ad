//! Model-free diagnostics: peaks, splittings, Debye-Waller inference and
//! coupling-regime classification.
//!
//! The splitting estimate is biased low when the two modes overlap
//! (g_ef ≲ 2γ_c): each peak sits on the other's wing and is pulled inward.
//! The fitted g_ef is the authoritative value; these helpers are cross-checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{coupling_detuned, AtomCouplingParams};
use crate::spectrum::Spectrum;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub detuning: f64,
    pub height: f64,
    /// Height above the higher of the two flanking minima.
    pub prominence: f64,
}

/// Local maxima by three-point comparison with at least `min_prominence`,
/// in ascending detuning. A flat-topped maximum is reported at the midpoint
/// of its plateau. End points are never peaks.
pub fn find_peaks(s: &Spectrum, min_prominence: f64) -> Vec<Peak> {
    let d: Vec<f64> = s.detunings().collect();
    let v: Vec<f64> = s.values().collect();
    let n = v.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if v[i] > v[i - 1] {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                let prominence = prominence(&v, i, j);
                if prominence >= min_prominence {
                    peaks.push(Peak { detuning: 0.5 * (d[i] + d[j]), height: v[i], prominence });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

fn prominence(v: &[f64], first: usize, last: usize) -> f64 {
    let h = v[first];
    let mut left_min = h;
    for &x in v[..first].iter().rev() {
        if x > h {
            break;
        }
        left_min = left_min.min(x);
    }
    let mut right_min = h;
    for &x in &v[last + 1..] {
        if x > h {
            break;
        }
        right_min = right_min.min(x);
    }
    h - left_min.max(right_min)
}

/// Distance between the two most prominent peaks.
pub fn estimate_splitting(s: &Spectrum) -> Option<f64> {
    let mut peaks = find_peaks(s, 0.0);
    if peaks.len() < 2 {
        return None;
    }
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    Some((peaks[0].detuning - peaks[1].detuning).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiAxEstimate {
    /// Estimate clamped into [0, 1].
    pub value: f64,
    pub unclamped: f64,
    pub out_of_range: bool,
}

/// ξ_ax = splitting / (2 N |g_δ| ξ_rad). `splitting` is in the same units
/// as the couplings in `p`.
pub fn infer_xi_ax(splitting: f64, p: &AtomCouplingParams) -> Result<XiAxEstimate> {
    let denom = 2.0 * p.n_atoms as f64 * coupling_detuned(p).abs() * p.xi_rad;
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::ZeroDenominator("2 N |g_delta| xi_rad"));
    }
    let raw = splitting / denom;
    Ok(XiAxEstimate { value: raw.clamp(0.0, 1.0), unclamped: raw, out_of_range: !(0.0..=1.0).contains(&raw) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SccRegime {
    Weak,
    Strong,
}

/// Strong cooperative coupling iff g_ef > γ_c; the boundary counts as weak.
pub fn classify_scc(g_ef: f64, gamma_c: f64) -> SccRegime {
    if g_ef > gamma_c {
        SccRegime::Strong
    } else {
        SccRegime::Weak
    }
}
