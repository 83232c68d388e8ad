use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{classify_scc, SccRegime};
use crate::error::{Error, Result};
use crate::fit::{BatchRow, FitResult, ParamSigmas, Termination};
use crate::io::{format_f64, read_text, write_atomic};

pub const RESULTS_FORMAT: &str = "cavlattice-fit-results";
const RESULTS_VERSION: u32 = 1;

/// Fitted values of one trace in γ_c-normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub g_ef: f64,
    pub chi: f64,
    pub retro_r: f64,
    pub scale_s: f64,
    pub delta_offset: f64,
    pub epsilon: f64,
    pub gamma_c: f64,
    pub sigma: ParamSigmas,
    pub cost: f64,
    pub n_points: usize,
    pub n_free: usize,
    pub n_iter: usize,
    pub converged: bool,
    pub termination: Termination,
    pub chi_start_used: f64,
    pub chi_weakly_identified: bool,
    pub scc: SccRegime,
}

impl FitRecord {
    pub fn from_fit(f: &FitResult) -> Self {
        Self {
            g_ef: f.params.g_ef,
            chi: f.params.chi,
            retro_r: f.params.retro_r,
            scale_s: f.params.scale_s,
            delta_offset: f.delta_offset,
            epsilon: f.params.epsilon,
            gamma_c: f.params.gamma_c,
            sigma: f.param_sigmas,
            cost: f.cost,
            n_points: f.n_points,
            n_free: f.n_free,
            n_iter: f.n_iter,
            converged: f.converged,
            termination: f.termination,
            chi_start_used: f.chi_start_used,
            chi_weakly_identified: f.chi_weakly_identified,
            scc: classify_scc(f.params.g_ef, f.params.gamma_c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsDocument {
    pub format: String,
    pub version: u32,
    /// Cavity linewidth defining the internal unit (γ_c = π × linewidth).
    pub linewidth_khz: f64,
    #[serde(default, rename = "trace")]
    pub traces: Vec<ResultRecord>,
}

impl ResultsDocument {
    pub fn new(linewidth_khz: f64, traces: Vec<ResultRecord>) -> Self {
        Self { format: RESULTS_FORMAT.into(), version: RESULTS_VERSION, linewidth_khz, traces }
    }

    pub fn to_toml(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize results: {e}")))?;
        Ok(format!("# fitted parameters per trace; frequencies in units of gamma_c\n{body}"))
    }

    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let doc: ResultsDocument = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { path: source.to_string(), line, msg: e.message().to_string() }
        })?;
        if doc.format != RESULTS_FORMAT {
            return Err(Error::Schema {
                path: source.into(),
                key: "format".into(),
                msg: format!("expected {RESULTS_FORMAT:?}, got {:?}", doc.format),
            });
        }
        if doc.version != RESULTS_VERSION {
            return Err(Error::Schema {
                path: source.into(),
                key: "version".into(),
                msg: format!("unsupported version {}", doc.version),
            });
        }
        if !(doc.linewidth_khz.is_finite() && doc.linewidth_khz > 0.0) {
            return Err(Error::Schema {
                path: source.into(),
                key: "linewidth_khz".into(),
                msg: "must be positive".into(),
            });
        }
        for (i, t) in doc.traces.iter().enumerate() {
            if t.fit.is_none() == t.error.is_none() {
                return Err(Error::Schema {
                    path: source.into(),
                    key: format!("trace[{i}]"),
                    msg: "exactly one of `fit` and `error` must be present".into(),
                });
            }
        }
        Ok(doc)
    }
}

/// Converts batch rows into records; `sources` names the input of each
/// `source_index`.
pub fn records_from_rows(rows: &[BatchRow], sources: &[String]) -> Vec<ResultRecord> {
    rows.iter()
        .map(|r| ResultRecord {
            n_atoms: Some(r.n_atoms),
            trace: r.trace.clone(),
            source: sources.get(r.source_index).cloned(),
            error: r.outcome.as_ref().err().cloned(),
            fit: r.outcome.as_ref().ok().map(FitRecord::from_fit),
        })
        .collect()
}

/// Spreadsheet twin of the results document.
pub fn format_results_csv(doc: &ResultsDocument) -> String {
    let mut out = String::from(
        "n_atoms,trace,status,g_ef,sigma_g_ef,chi,sigma_chi,retro_r,sigma_retro_r,scale_s,sigma_scale_s,\
         delta_offset,sigma_delta_offset,cost,converged,chi_weakly_identified,scc\n",
    );
    for t in &doc.traces {
        let n = t.n_atoms.map(|n| n.to_string()).unwrap_or_default();
        let label = t.trace.clone().unwrap_or_default();
        match &t.fit {
            Some(f) => {
                let nums = [
                    f.g_ef,
                    f.sigma.g_ef,
                    f.chi,
                    f.sigma.chi,
                    f.retro_r,
                    f.sigma.retro_r,
                    f.scale_s,
                    f.sigma.scale_s,
                    f.delta_offset,
                    f.sigma.delta_offset,
                    f.cost,
                ]
                .map(format_f64)
                .join(",");
                let scc = match f.scc {
                    SccRegime::Weak => "weak",
                    SccRegime::Strong => "strong",
                };
                let _ = writeln!(out, "{n},{label},ok,{nums},{},{},{scc}", f.converged, f.chi_weakly_identified);
            }
            None => {
                let _ = writeln!(out, "{n},{label},failed,,,,,,,,,,,,,,");
            }
        }
    }
    out
}

/// Writes `<stem>.toml` and its CSV twin `<stem>.csv` next to `path`.
pub fn write_results(doc: &ResultsDocument, path: &Path) -> Result<()> {
    write_atomic(path, doc.to_toml()?.as_bytes())?;
    write_atomic(&path.with_extension("csv"), format_results_csv(doc).as_bytes())
}

pub fn read_results(path: &Path) -> Result<ResultsDocument> {
    ResultsDocument::from_toml(&read_text(path)?, &path.display().to_string())
}
