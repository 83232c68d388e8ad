use std::fmt::Write as _;

use cavlattice::analysis::{classify_scc, infer_xi_ax, SccRegime};
use cavlattice::fit::{linear_regression, Regression};
use cavlattice::io::{format_f64, FitRecord, ResultsDocument, RunConfig};
use cavlattice::physics::{coupling_detuned, scc_threshold, AtomCouplingParams, CavityParams};

use crate::Failure;

/// Experimental S constancy quoted for comparison; not a pass criterion.
const REFERENCE_S_SPREAD_PCT: f64 = 12.0;

pub struct Report<'a> {
    doc: &'a ResultsDocument,
    base: AtomCouplingParams,
    cav: CavityParams,
    path_asymmetry: f64,
    regression: Option<Regression>,
    regression_note: Option<String>,
}

fn fitted(doc: &ResultsDocument) -> impl Iterator<Item = (Option<u64>, &FitRecord)> {
    doc.traces.iter().filter_map(|r| r.fit.as_ref().map(|f| (r.n_atoms, f)))
}

fn regime(f: &FitRecord) -> &'static str {
    match classify_scc(f.g_ef, f.gamma_c) {
        SccRegime::Strong => "strong",
        SccRegime::Weak => "weak",
    }
}

/// Spread of S as (max − min) / mean, in percent.
fn s_spread_pct(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Some(100.0 * (hi - lo) / mean)
}

impl<'a> Report<'a> {
    pub fn new(cfg: &RunConfig, doc: &'a ResultsDocument) -> Result<Self, Failure> {
        let cav = cfg.cavity_params()?;
        let base = cfg.atom_params()?;
        let points: Vec<(f64, f64)> = fitted(doc).filter_map(|(n, f)| n.map(|n| (n as f64, f.g_ef))).collect();
        let (regression, regression_note) = match linear_regression(&points) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(format!("regression skipped: {e} ({} fitted trace(s) with N)", points.len()))),
        };
        Ok(Self { doc, base, cav, path_asymmetry: cfg.cavity.path_asymmetry, regression, regression_note })
    }

    /// Slope of g_ef against N implied by the configured couplings, in γ_c per atom.
    fn expected_slope(&self) -> f64 {
        coupling_detuned(&self.base) * self.base.xi_rad * self.base.xi_ax / self.cav.gamma_c
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "traces: {} ({} fitted)", self.doc.traces.len(), fitted(self.doc).count());
        let _ = writeln!(w, "frequencies in units of gamma_c (linewidth {} kHz)", self.doc.linewidth_khz);
        let _ = writeln!(w);
        let _ = writeln!(w, "{:>9}  {:>18}  {:>18}  {:>18}  {:>18}  {:>6}  flags", "N", "g_ef", "R", "S", "chi", "scc");
        for rec in &self.doc.traces {
            let n = rec.n_atoms.map_or("-".to_string(), |n| n.to_string());
            let Some(f) = &rec.fit else {
                let _ = writeln!(w, "{n:>9}  failed: {}", rec.error.as_deref().unwrap_or("no fit"));
                continue;
            };
            let pm = |v: f64, s: f64| format!("{v:.4} ± {s:.2e}");
            let mut flags = Vec::new();
            if !f.converged {
                flags.push("not-converged");
            }
            if f.chi_weakly_identified {
                flags.push("chi-weak");
            }
            let _ = writeln!(
                w,
                "{n:>9}  {:>18}  {:>18}  {:>18}  {:>18}  {:>6}  {}",
                pm(f.g_ef, f.sigma.g_ef),
                pm(f.retro_r, f.sigma.retro_r),
                pm(f.scale_s, f.sigma.scale_s),
                pm(f.chi, f.sigma.chi),
                regime(f),
                flags.join(",")
            );
        }
        let _ = writeln!(w);

        match scc_threshold(&self.base, &self.cav) {
            Ok(n) => {
                let _ = writeln!(w, "strong-coupling threshold (g_ef = gamma_c): N = {n}");
            }
            Err(e) => {
                let _ = writeln!(w, "strong-coupling threshold unavailable: {e}");
            }
        }
        let expected = self.expected_slope();
        match (&self.regression, &self.regression_note) {
            (Some(r), _) => {
                let _ = writeln!(w, "g_ef vs N regression over {} traces:", r.n);
                let _ = writeln!(w, "  slope     {:.6e} ± {:.2e} per atom", r.slope, r.slope_sigma);
                let _ = writeln!(w, "  intercept {:.6} ± {:.2e}", r.intercept, r.intercept_sigma);
                let _ = writeln!(w, "  r^2       {:.6}", r.r_squared);
                let _ = writeln!(w, "  expected slope from configuration {expected:.6e} per atom");
                let xi = r.slope / expected * self.base.xi_ax;
                let _ = writeln!(w, "xi_ax from slope: {xi:.4} (configured {})", self.base.xi_ax);
            }
            (None, Some(note)) => {
                let _ = writeln!(w, "{note}");
            }
            (None, None) => unreachable!("regression or note is always set"),
        }

        let per_trace: Vec<String> = fitted(self.doc)
            .filter(|(n, f)| n.is_some_and(|n| n > 0) && classify_scc(f.g_ef, f.gamma_c) == SccRegime::Strong)
            .filter_map(|(n, f)| {
                let n = n?;
                let est = infer_xi_ax(2.0 * f.g_ef * self.cav.gamma_c, &self.base.with_atoms(n)).ok()?;
                let mark = if est.out_of_range { " (clamped)" } else { "" };
                Some(format!("  N {n:>9}: {:.4}{mark}", est.value))
            })
            .collect();
        if !per_trace.is_empty() {
            let _ = writeln!(w, "xi_ax from splitting 2 g_ef, strong-coupling traces:");
            for line in per_trace {
                let _ = writeln!(w, "{line}");
            }
        }

        let s: Vec<f64> = fitted(self.doc).map(|(_, f)| f.scale_s).collect();
        match s_spread_pct(&s) {
            Some(p) => {
                let _ = writeln!(
                    w,
                    "S spread (max - min) / mean: {p:.3}% (experiment reported better than {REFERENCE_S_SPREAD_PCT}%)"
                );
            }
            None => {
                let _ = writeln!(w, "S spread needs at least two fitted traces");
            }
        }
        let _ = writeln!(w, "path asymmetry {}: chi is expected near zero for the empty cavity", self.path_asymmetry);
        out
    }

    /// Plot-ready table, one row per fitted trace.
    pub fn table(&self) -> String {
        let mut out = String::from(
            "n_atoms,g_ef,sigma_g_ef,retro_r,sigma_retro_r,scale_s,sigma_scale_s,chi,sigma_chi,scc,chi_weak,converged\n",
        );
        for (n, f) in fitted(self.doc) {
            let n = n.map_or(String::new(), |n| n.to_string());
            let nums =
                [f.g_ef, f.sigma.g_ef, f.retro_r, f.sigma.retro_r, f.scale_s, f.sigma.scale_s, f.chi, f.sigma.chi]
                    .map(format_f64)
                    .join(",");
            let _ = writeln!(out, "{n},{nums},{},{},{}", regime(f), f.chi_weakly_identified, f.converged);
        }
        out
    }
}
