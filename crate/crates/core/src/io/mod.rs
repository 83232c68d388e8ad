//! Text formats: spectrum CSV, TOML run configuration, fit results.
//!
//! Spectra use kHz on disk (header `detuning_khz`) or the internal
//! γ_c-normalized axis (header `detuning`). Floats are written in their
//! shortest round-tripping decimal form.

mod config;
mod results;
mod spectrum_csv;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use config::{read_config, write_config, AtomsSection, CavitySection, RunConfig, SynthSection};
pub use results::{
    format_results_csv, read_results, records_from_rows, write_results, FitRecord, ResultRecord, ResultsDocument,
    RESULTS_FORMAT,
};
pub use spectrum_csv::{
    format_spectrum, parse_spectrum, read_spectrum, read_spectrum_with, write_spectrum, write_spectrum_with,
    SpectrumFormat, META_LINEWIDTH,
};

use crate::error::{Error, Result};

/// Shortest decimal representation that parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| {
        Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))
    })?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
