//! Recovery of (g_ef, χ, R, S) and the x-axis offset from a measured
//! spectrum by damped least squares.
//!
//! The residual of point i is `(y_i − M(x_i − δ_offset)) / σ_i` with σ_i = 1
//! when a spectrum carries no uncertainties. ε and γ_c are held fixed
//! unless the configuration frees them. The periodic phase χ is started
//! from `chi_starts` equally spaced values.

mod batch;
mod lm;

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use batch::{batch_fit, linear_regression, regress_gef_vs_n, BatchRow, Regression};
pub use lm::Termination;

use crate::analysis::find_peaks;
use crate::error::{Error, Result};
use crate::model::{fit_model_raw, wrap_phase, SpectrumModelParams, DEFAULT_EPSILON};
use crate::spectrum::Spectrum;
use lm::{LeastSquares, LmOptions};

/// Parameter slots of the full fit vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    GEf,
    Chi,
    RetroR,
    ScaleS,
    DeltaOffset,
    Epsilon,
    GammaC,
}

impl Param {
    pub const ALL: [Param; 7] =
        [Param::GEf, Param::Chi, Param::RetroR, Param::ScaleS, Param::DeltaOffset, Param::Epsilon, Param::GammaC];

    fn idx(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::GEf => "g_ef",
            Param::Chi => "chi",
            Param::RetroR => "retro_r",
            Param::ScaleS => "scale_s",
            Param::DeltaOffset => "delta_offset",
            Param::Epsilon => "epsilon",
            Param::GammaC => "gamma_c",
        }
    }

    /// Region where the model itself is defined, used to keep finite
    /// differences valid.
    fn domain(self) -> (f64, f64) {
        match self {
            Param::Epsilon => (0.0, 1.0),
            Param::GammaC => (f64::MIN_POSITIVE, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// Closed boxes for the bounded fit parameters. χ is periodic and wraps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitBounds {
    pub g_ef: [f64; 2],
    pub retro_r: [f64; 2],
    pub scale_s: [f64; 2],
    pub delta_offset: [f64; 2],
    pub epsilon: [f64; 2],
    pub gamma_c: [f64; 2],
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            g_ef: [0.0, f64::INFINITY],
            retro_r: [0.0, f64::INFINITY],
            scale_s: [f64::MIN_POSITIVE, f64::INFINITY],
            delta_offset: [f64::NEG_INFINITY, f64::INFINITY],
            epsilon: [0.0, 1.0],
            gamma_c: [1e-6, f64::INFINITY],
        }
    }
}

impl FitBounds {
    fn get(&self, p: Param) -> (f64, f64) {
        let b = match p {
            Param::GEf => self.g_ef,
            Param::Chi => return (f64::NEG_INFINITY, f64::INFINITY),
            Param::RetroR => self.retro_r,
            Param::ScaleS => self.scale_s,
            Param::DeltaOffset => self.delta_offset,
            Param::Epsilon => self.epsilon,
            Param::GammaC => self.gamma_c,
        };
        (b[0], b[1])
    }

    fn validate(&self) -> std::result::Result<(), (String, String)> {
        let checks = [
            ("g_ef", self.g_ef, 0.0, f64::INFINITY),
            ("retro_r", self.retro_r, 0.0, f64::INFINITY),
            ("scale_s", self.scale_s, f64::MIN_POSITIVE, f64::INFINITY),
            ("delta_offset", self.delta_offset, f64::NEG_INFINITY, f64::INFINITY),
            ("epsilon", self.epsilon, 0.0, 1.0),
            ("gamma_c", self.gamma_c, f64::MIN_POSITIVE, f64::INFINITY),
        ];
        for (name, [lo, hi], min, max) in checks {
            if lo.is_nan() || hi.is_nan() || !(lo < hi) {
                return Err((format!("bounds.{name}"), format!("interval [{lo}, {hi}] is degenerate")));
            }
            if lo < min || hi > max {
                return Err((
                    format!("bounds.{name}"),
                    format!("interval [{lo}, {hi}] leaves the admissible range [{min}, {max}]"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// ε used for every fit unless `fit_epsilon` is set.
    pub epsilon_fixed: f64,
    /// γ_c in internal units (1 when the axis is normalized by the cavity).
    pub gamma_c_fixed: f64,
    pub bounds: FitBounds,
    pub chi_starts: usize,
    pub max_iter: usize,
    pub tol_step: f64,
    pub tol_grad: f64,
    pub tol_cost: f64,
    /// Pin R = 0 when the initial coupling estimate is below γ_c.
    pub lock_r_zero_below_threshold: bool,
    /// Hold R at this value instead of fitting it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_r: Option<f64>,
    pub fit_epsilon: bool,
    pub fit_gamma_c: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epsilon_fixed: DEFAULT_EPSILON,
            gamma_c_fixed: 1.0,
            bounds: FitBounds::default(),
            chi_starts: 8,
            max_iter: 200,
            tol_step: 1e-10,
            tol_grad: 1e-10,
            tol_cost: 1e-14,
            lock_r_zero_below_threshold: false,
            fixed_r: None,
            fit_epsilon: false,
            fit_gamma_c: false,
        }
    }
}

impl FitConfig {
    /// Returns the offending key and a message on failure.
    pub fn check(&self) -> std::result::Result<(), (String, String)> {
        let bad = |k: &str, m: String| Err((k.to_string(), m));
        if !(0.0..=1.0).contains(&self.epsilon_fixed) {
            return bad("epsilon_fixed", format!("{} is outside [0, 1]", self.epsilon_fixed));
        }
        if !(self.gamma_c_fixed.is_finite() && self.gamma_c_fixed > 0.0) {
            return bad("gamma_c_fixed", format!("{} must be positive", self.gamma_c_fixed));
        }
        if self.chi_starts == 0 {
            return bad("chi_starts", "must be at least 1".into());
        }
        if self.max_iter == 0 {
            return bad("max_iter", "must be at least 1".into());
        }
        for (k, v) in [("tol_step", self.tol_step), ("tol_grad", self.tol_grad), ("tol_cost", self.tol_cost)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(k, format!("{v} must be positive"));
            }
        }
        if let Some(r) = self.fixed_r {
            if !(r.is_finite() && r >= 0.0) {
                return bad("fixed_r", format!("{r} must be >= 0"));
            }
        }
        self.bounds.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(k, m)| Error::invalid(format!("{k}: {m}")))
    }

    fn lm_options(&self) -> LmOptions {
        LmOptions { max_iter: self.max_iter, tol_step: self.tol_step, tol_grad: self.tol_grad, tol_cost: self.tol_cost }
    }
}

/// Starting point for a fit; ε and γ_c come from the configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitStart {
    pub g_ef: f64,
    pub chi: f64,
    pub retro_r: f64,
    pub scale_s: f64,
    pub delta_offset: f64,
}

/// 1σ uncertainties; infinite for directions the data do not constrain,
/// zero for parameters held fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSigmas {
    pub g_ef: f64,
    pub chi: f64,
    pub retro_r: f64,
    pub scale_s: f64,
    pub delta_offset: f64,
    pub epsilon: f64,
    pub gamma_c: f64,
}

impl ParamSigmas {
    fn from_slots(s: [f64; 7]) -> Self {
        Self { g_ef: s[0], chi: s[1], retro_r: s[2], scale_s: s[3], delta_offset: s[4], epsilon: s[5], gamma_c: s[6] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: SpectrumModelParams,
    pub delta_offset: f64,
    /// Sum of squared weighted residuals.
    pub cost: f64,
    pub param_sigmas: ParamSigmas,
    pub n_points: usize,
    pub n_free: usize,
    pub n_iter: usize,
    pub converged: bool,
    pub termination: Termination,
    pub chi_start_used: f64,
    /// σ_χ > π/4: the phase is not meaningfully constrained.
    pub chi_weakly_identified: bool,
    /// Cost after every accepted iteration of the winning start.
    pub cost_history: Vec<f64>,
    /// Converged cost of every start, in the order tried.
    pub start_costs: Vec<f64>,
}

impl FitResult {
    pub fn as_start(&self) -> FitStart {
        FitStart {
            g_ef: self.params.g_ef,
            chi: self.params.chi,
            retro_r: self.params.retro_r,
            scale_s: self.params.scale_s,
            delta_offset: self.delta_offset,
        }
    }

    /// cost / (n − k).
    pub fn reduced_chi_square(&self) -> f64 {
        let dof = self.n_points.saturating_sub(self.n_free);
        if dof == 0 {
            f64::NAN
        } else {
            self.cost / dof as f64
        }
    }
}

/// Weighted residuals `(y_i − M(x_i − δ_offset)) / σ_i`.
pub fn residuals(spectrum: &Spectrum, params: &SpectrumModelParams, delta_offset: f64) -> Result<Vec<f64>> {
    if spectrum.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    crate::model::check_eval_domain(params.epsilon, params.gamma_c)?;
    Ok(spectrum
        .points()
        .iter()
        .map(|pt| {
            let m = fit_model_raw(
                pt.detuning - delta_offset,
                params.g_ef,
                params.chi,
                params.retro_r,
                params.scale_s,
                params.epsilon,
                params.gamma_c,
            );
            (pt.value - m) / pt.sigma.unwrap_or(1.0)
        })
        .collect())
}

/// Central-difference step used for parameter value `v`.
pub fn difference_step(v: f64) -> f64 {
    (1e-6 * v.abs()).max(1e-8)
}

struct Problem<'a> {
    x: &'a [f64],
    y: Vec<f64>,
    inv_sigma: Vec<f64>,
    base: [f64; 7],
    free: Vec<Param>,
    bounds: FitBounds,
}

impl Problem<'_> {
    fn full(&self, p: &[f64]) -> [f64; 7] {
        let mut f = self.base;
        for (slot, &v) in self.free.iter().zip(p) {
            f[slot.idx()] = v;
        }
        f
    }

    fn eval_full(&self, f: &[f64; 7], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let m = fit_model_raw(self.x[i] - f[4], f[0], f[1], f[2], f[3], f[5], f[6]);
            *o = (self.y[i] - m) * self.inv_sigma[i];
        }
    }
}

impl LeastSquares for Problem<'_> {
    fn n_params(&self) -> usize {
        self.free.len()
    }

    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        self.eval_full(&self.full(p), out);
    }

    fn jacobian(&self, p: &[f64], r: &[f64], out: &mut DMatrix<f64>) {
        let n = self.x.len();
        let mut hi = vec![0.0; n];
        let mut lo = vec![0.0; n];
        for (j, &slot) in self.free.iter().enumerate() {
            let v = p[j];
            let h = difference_step(v);
            let (dlo, dhi) = slot.domain();
            let mut f = self.full(p);
            if v + h > dhi {
                f[slot.idx()] = v - h;
                self.eval_full(&f, &mut lo);
                for i in 0..n {
                    out[(i, j)] = (r[i] - lo[i]) / h;
                }
            } else if v - h < dlo {
                f[slot.idx()] = v + h;
                self.eval_full(&f, &mut hi);
                for i in 0..n {
                    out[(i, j)] = (hi[i] - r[i]) / h;
                }
            } else {
                f[slot.idx()] = v + h;
                self.eval_full(&f, &mut hi);
                f[slot.idx()] = v - h;
                self.eval_full(&f, &mut lo);
                for i in 0..n {
                    out[(i, j)] = (hi[i] - lo[i]) / (2.0 * h);
                }
            }
        }
    }

    fn project(&self, p: &mut [f64]) {
        for (slot, v) in self.free.iter().zip(p.iter_mut()) {
            if *slot == Param::Chi {
                *v = wrap_phase(*v);
            } else {
                let (lo, hi) = self.bounds.get(*slot);
                *v = v.clamp(lo, hi);
            }
        }
    }

    fn bounds(&self, j: usize) -> (f64, f64) {
        self.bounds.get(self.free[j])
    }

    fn difference(&self, j: usize, a: f64, b: f64) -> f64 {
        if self.free[j] == Param::Chi {
            wrap_phase(b - a)
        } else {
            b - a
        }
    }
}

fn build_problem<'a>(x: &'a [f64], spectrum: &Spectrum, cfg: &FitConfig, fix_r: Option<f64>) -> Problem<'a> {
    let mut free = vec![Param::GEf, Param::Chi];
    if fix_r.is_none() {
        free.push(Param::RetroR);
    }
    free.push(Param::ScaleS);
    free.push(Param::DeltaOffset);
    if cfg.fit_epsilon {
        free.push(Param::Epsilon);
    }
    if cfg.fit_gamma_c {
        free.push(Param::GammaC);
    }
    let mut base = [0.0; 7];
    base[Param::RetroR.idx()] = fix_r.unwrap_or(0.0);
    base[Param::Epsilon.idx()] = cfg.epsilon_fixed;
    base[Param::GammaC.idx()] = cfg.gamma_c_fixed;
    Problem {
        x,
        y: spectrum.values().collect(),
        inv_sigma: spectrum.weights_sigma().map(|s| 1.0 / s).collect(),
        base,
        free,
        bounds: cfg.bounds,
    }
}

/// Numerically differenced Jacobian of [`residuals`] with respect to
/// (g_ef, χ, R, S, δ_offset), one column per parameter, using the same
/// steps as the fitter.
pub fn residual_jacobian(spectrum: &Spectrum, params: &SpectrumModelParams, delta_offset: f64) -> Result<DMatrix<f64>> {
    let r = residuals(spectrum, params, delta_offset)?;
    let x: Vec<f64> = spectrum.detunings().collect();
    let cfg = FitConfig { epsilon_fixed: params.epsilon, gamma_c_fixed: params.gamma_c, ..FitConfig::default() };
    let prob = build_problem(&x, spectrum, &cfg, None);
    let p = [params.g_ef, params.chi, params.retro_r, params.scale_s, delta_offset];
    let mut jac = DMatrix::zeros(x.len(), p.len());
    prob.jacobian(&p, &r, &mut jac);
    Ok(jac)
}

/// Symmetric pseudo-inverse of JᵀJ scaled by the residual variance.
/// Parameters touching an unconstrained direction get an infinite σ.
fn covariance_sigmas(jac: &DMatrix<f64>, cost: f64, n: usize) -> Vec<f64> {
    let k = jac.ncols();
    let dof = n.saturating_sub(k);
    if dof == 0 {
        return vec![f64::INFINITY; k];
    }
    let s2 = cost / dof as f64;
    let normal = jac.tr_mul(jac);
    let scale: Vec<f64> = (0..k).map(|j| normal[(j, j)].sqrt()).collect();
    let mut sigmas = vec![f64::INFINITY; k];
    let live: Vec<usize> = (0..k).filter(|&j| scale[j] > 0.0 && scale[j].is_finite()).collect();
    if live.is_empty() {
        return sigmas;
    }
    let m = live.len();
    let scaled = DMatrix::from_fn(m, m, |a, b| normal[(live[a], live[b])] / (scale[live[a]] * scale[live[b]]));
    let eig = scaled.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cutoff = 1e-13 * lmax;
    for (a, &j) in live.iter().enumerate() {
        let mut var = 0.0;
        let mut unconstrained = false;
        for e in 0..m {
            let lam = eig.eigenvalues[e];
            let v = eig.eigenvectors[(a, e)];
            if lam > cutoff {
                var += v * v / lam;
            } else if v.abs() > 1e-6 {
                unconstrained = true;
            }
        }
        sigmas[j] = if unconstrained { f64::INFINITY } else { (var * s2).sqrt() / scale[j] };
    }
    sigmas
}

/// Coupling/offset guesses from the peak structure of the data.
fn initial_candidates(spectrum: &Spectrum) -> Vec<(f64, f64)> {
    let x: Vec<f64> = spectrum.detunings().collect();
    let (ymin, ymax) = spectrum.values().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let range = ymax - ymin;
    let mut peaks = find_peaks(spectrum, 0.1 * range);
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    let mut out = Vec::new();
    if peaks.len() >= 2 {
        let (a, b) = (peaks[0].detuning, peaks[1].detuning);
        out.push(((a - b).abs() / 2.0, 0.5 * (a + b)));
    }
    let (xp, hp) = match peaks.first() {
        Some(p) => (p.detuning, p.height),
        None => {
            let i = spectrum.values().enumerate().fold(
                0,
                |best, (i, v)| {
                    if v > spectrum.points()[best].value {
                        i
                    } else {
                        best
                    }
                },
            );
            (x[i], ymax)
        }
    };
    // half-maximum width of the dominant feature
    let half = ymin + 0.5 * (hp - ymin);
    let pts = spectrum.points();
    let ip = pts.partition_point(|p| p.detuning < xp).min(pts.len() - 1);
    let left = pts[..=ip].iter().rev().find(|p| p.value < half).map(|p| p.detuning).unwrap_or(x[0]);
    let right = pts[ip..].iter().find(|p| p.value < half).map(|p| p.detuning).unwrap_or(x[x.len() - 1]);
    let width = right - left;
    let g_width = ((0.5 * width).powi(2) - 1.0).max(0.0).sqrt();
    out.push((g_width.max(0.2), 0.5 * (left + right)));
    out.push((0.5, xp));
    out
}

/// Linear least squares for (S, S·R) at fixed nonlinear parameters.
fn linear_scale(prob: &Problem<'_>, full: &[f64; 7], fit_r: bool) -> (f64, f64) {
    let (mut app, mut apm, mut amm, mut bp, mut bm) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..prob.x.len() {
        let w = prob.inv_sigma[i] * prob.inv_sigma[i];
        let (mp, mm) = crate::model::m_pm_raw(prob.x[i] - full[4], full[0], full[1], full[5], full[6]);
        app += w * mp * mp;
        apm += w * mp * mm;
        amm += w * mm * mm;
        bp += w * mp * prob.y[i];
        bm += w * mm * prob.y[i];
    }
    let s_only = |r: f64| {
        let denom = app - 2.0 * r * apm + r * r * amm;
        let s = (bp - r * bm) / denom;
        (s, r)
    };
    if !fit_r {
        return s_only(full[2]);
    }
    let det = app * amm - apm * apm;
    if det > 1e-10 * app * amm {
        let a = (bp * amm - bm * apm) / det; // S
        let b = (bp * apm - bm * app) / det; // −S·R
        if a > 0.0 && -b >= 0.0 {
            return (a, -b / a);
        }
    }
    s_only(0.0)
}

/// Other (χ, R, S) giving exactly the same curve as `full` at its g_ef,
/// δ_offset, ε and γ_c.
///
/// Expanding the numerators, S·(M₊ − R·M₋) = P(δ)/den(δ) where den depends
/// only on g_ef and P is a quadratic whose coefficients
///   A  = S(a² − R c²)
///   B  = k S (1 − R) cos χ
///   C' = S[(c² − R a²) g² + k γ (1 + R) sin χ]
/// (a² = 1 + ε, c² = 1 − ε, k = 2acg, C' = C − Aγ²) are all the data can
/// see. Eliminating S and χ leaves a quartic in R whose roots are found
/// here by scanning and bisection.
fn equivalent_sets(full: &[f64; 7], bounds: &FitBounds) -> Vec<[f64; 7]> {
    let [g, chi, r, s, _, eps, gamma] = *full;
    let (a2, c2) = (1.0 + eps, 1.0 - eps);
    let k = 2.0 * (a2 * c2).sqrt() * g;
    if !(k > 0.0 && gamma > 0.0) {
        return Vec::new();
    }
    let (sin, cos) = chi.sin_cos();
    let ca = s * (a2 - r * c2);
    let cb = k * s * (1.0 - r) * cos;
    let cc = s * ((c2 - r * a2) * g * g + k * gamma * (1.0 + r) * sin);
    // (cos χ, sin χ) scaled by kAγ(1 − R²)
    let trig = |rr: f64| {
        let d = a2 - rr * c2;
        (cb * d * gamma * (1.0 + rr), (1.0 - rr) * (cc * d - ca * (c2 - rr * a2) * g * g))
    };
    let quartic = |rr: f64| {
        let (u, v) = trig(rr);
        let e = k * ca * gamma * (1.0 - rr * rr);
        u * u + v * v - e * e
    };
    let lo = bounds.retro_r[0].max(0.0);
    let hi = bounds.retro_r[1].min(a2 / c2 * (1.0 - 1e-12));
    if !(hi > lo) {
        return Vec::new();
    }
    // sample uniformly in R/(1 + R) so both small and large R are resolved
    let (ulo, uhi) = (lo / (1.0 + lo), hi / (1.0 + hi));
    let at = |t: f64| {
        let u = ulo + (uhi - ulo) * t;
        u / (1.0 - u)
    };
    const SAMPLES: usize = 4096;
    let mut roots = Vec::new();
    let mut prev = (at(0.0), quartic(at(0.0)));
    for i in 1..=SAMPLES {
        let rr = at(i as f64 / SAMPLES as f64);
        let q = quartic(rr);
        if prev.1 == 0.0 || prev.1.signum() != q.signum() {
            let (mut a, mut b, qa) = (prev.0, rr, prev.1);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if quartic(m).signum() == qa.signum() && qa != 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev = (rr, q);
    }
    let mut out = Vec::new();
    for rr in roots {
        if (rr - r).abs() <= 1e-6 * (1.0 + r) || (1.0 - rr).abs() < 1e-9 {
            continue;
        }
        let sv = ca / (a2 - rr * c2);
        if !(sv >= bounds.scale_s[0] && sv <= bounds.scale_s[1]) {
            continue;
        }
        let (u, v) = trig(rr);
        let e = k * ca * gamma * (1.0 - rr * rr);
        let chi_new = (v * e.signum()).atan2(u * e.signum());
        let mut f = *full;
        f[1] = chi_new;
        f[2] = rr;
        f[3] = sv;
        out.push(f);
    }
    out
}

/// Fits one spectrum. `init`, when given, is tried in addition to the
/// data-driven starting points.
pub fn fit_spectrum(spectrum: &Spectrum, cfg: &FitConfig, init: Option<&FitStart>) -> Result<FitResult> {
    cfg.validate()?;
    if spectrum.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let candidates = initial_candidates(spectrum);
    let fix_r = match cfg.fixed_r {
        Some(r) => Some(r),
        None if cfg.lock_r_zero_below_threshold && candidates[0].0 < cfg.gamma_c_fixed => Some(0.0),
        None => None,
    };
    let x: Vec<f64> = spectrum.detunings().collect();
    let prob = build_problem(&x, spectrum, cfg, fix_r);
    let k = prob.free.len();
    if spectrum.len() < k {
        return Err(Error::InsufficientPoints { needed: k, got: spectrum.len() });
    }

    let mut starts: Vec<[f64; 7]> = Vec::new();
    if let Some(s) = init {
        let mut f = prob.base;
        f[0] = s.g_ef;
        f[1] = s.chi;
        if fix_r.is_none() {
            f[2] = s.retro_r;
        }
        f[3] = s.scale_s;
        f[4] = s.delta_offset;
        starts.push(f);
    }
    for c in 0..cfg.chi_starts {
        let chi = -PI + 2.0 * PI * c as f64 / cfg.chi_starts as f64;
        if init.is_some() {
            let mut f = starts[0];
            f[1] = chi;
            starts.push(f);
        }
        for &(g, off) in &candidates {
            let mut f = prob.base;
            f[0] = g;
            f[1] = chi;
            f[4] = off;
            let (s, r) = linear_scale(&prob, &f, fix_r.is_none());
            f[2] = r;
            f[3] = if s.is_finite() && s > 0.0 { s } else { 1.0 };
            starts.push(f);
        }
    }

    let opts = cfg.lm_options();
    // Costs closer than this are indistinguishable from rounding in the data.
    let floor = {
        let ymax = prob.y.iter().zip(&prob.inv_sigma).fold(0.0f64, |a, (y, w)| a.max((y * w).abs()));
        64.0 * x.len() as f64 * (f64::EPSILON * ymax).powi(2)
    };
    let ties = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.max(b) + floor;
    let better = |new: &lm::LmOutcome, old: &lm::LmOutcome| {
        if ties(new.cost, old.cost) {
            prob.full(&new.params)[1].abs() < prob.full(&old.params)[1].abs()
        } else {
            new.cost < old.cost
        }
    };
    let mut best: Option<(lm::LmOutcome, f64)> = None;
    let mut start_costs = Vec::with_capacity(starts.len());
    let mut last_err = None;
    for f in &starts {
        let p0: Vec<f64> = prob.free.iter().map(|s| f[s.idx()]).collect();
        let out = match lm::minimize(&prob, &p0, &opts) {
            Ok(o) => o,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        start_costs.push(out.cost);
        if best.as_ref().is_none_or(|(b, _)| better(&out, b)) {
            best = Some((out, f[1]));
        }
    }
    let Some((mut out, mut chi_start_used)) = best else {
        return Err(last_err.unwrap_or(Error::SingularNormalEquations));
    };
    if fix_r.is_none() && !cfg.fit_epsilon && !cfg.fit_gamma_c {
        for twin in equivalent_sets(&prob.full(&out.params), &cfg.bounds) {
            let p0: Vec<f64> = prob.free.iter().map(|s| twin[s.idx()]).collect();
            if let Ok(alt) = lm::minimize(&prob, &p0, &opts) {
                if better(&alt, &out) {
                    chi_start_used = twin[1];
                    out = alt;
                }
            }
        }
    }
    // Report the empty-cavity solution when the data cannot tell it apart.
    // χ and R then drop out of the model and are reported as zero.
    let mut dropped: &[Param] = &[];
    if cfg.bounds.g_ef[0] <= 0.0 && cfg.bounds.retro_r[0] <= 0.0 {
        let mut base = prob.full(&out.params);
        base[0] = 0.0;
        base[1] = 0.0;
        if fix_r.is_none() {
            base[2] = 0.0;
        }
        let reduced = Problem {
            x: prob.x,
            y: prob.y.clone(),
            inv_sigma: prob.inv_sigma.clone(),
            base,
            free: prob.free.iter().copied().filter(|s| !matches!(s, Param::GEf | Param::Chi | Param::RetroR)).collect(),
            bounds: prob.bounds,
        };
        let p0: Vec<f64> = reduced.free.iter().map(|s| base[s.idx()]).collect();
        if let Ok(flat) = lm::minimize(&reduced, &p0, &opts) {
            if flat.cost < out.cost || ties(flat.cost, out.cost) {
                let full = reduced.full(&flat.params);
                out = lm::LmOutcome { params: prob.free.iter().map(|s| full[s.idx()]).collect(), ..flat };
                chi_start_used = 0.0;
                dropped = &[Param::Chi, Param::RetroR];
            }
        }
    }

    let full = prob.full(&out.params);
    let mut jac = DMatrix::zeros(x.len(), k);
    prob.jacobian(&out.params, &out.residuals, &mut jac);
    let kept: Vec<usize> = (0..k).filter(|&j| !dropped.contains(&prob.free[j])).collect();
    let kept_sigmas = covariance_sigmas(&jac.select_columns(&kept), out.cost, x.len());
    let mut slots = [0.0; 7];
    for &slot in dropped {
        slots[slot.idx()] = f64::INFINITY;
    }
    for (&j, s) in kept.iter().zip(&kept_sigmas) {
        slots[prob.free[j].idx()] = *s;
    }
    let sigmas = ParamSigmas::from_slots(slots);

    let params = SpectrumModelParams {
        g_ef: full[0],
        chi: wrap_phase(full[1]),
        retro_r: full[2],
        scale_s: full[3],
        epsilon: full[5],
        gamma_c: full[6],
    };
    Ok(FitResult {
        params,
        delta_offset: full[4],
        cost: out.cost,
        param_sigmas: sigmas,
        n_points: x.len(),
        n_free: k,
        n_iter: out.n_iter,
        converged: out.termination != Termination::MaxIter,
        termination: out.termination,
        chi_start_used,
        chi_weakly_identified: !(sigmas.chi <= FRAC_PI_4),
        cost_history: out.history,
        start_costs,
    })
}
