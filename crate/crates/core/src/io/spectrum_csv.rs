use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{format_f64, read_text, write_atomic};
use crate::spectrum::{Spectrum, SpectrumPoint};
use crate::units::{UnitScale, Units};

/// Header key stating the kHz conversion of a file; consumed by the reader
/// rather than stored in the spectrum metadata.
pub const META_LINEWIDTH: &str = "linewidth_khz";

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SpectrumFormat {
    pub units: Units,
    pub scale: UnitScale,
}

fn is_key(k: &str) -> bool {
    let mut chars = k.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

fn meta_line(line: &str) -> Option<(&str, &str)> {
    let body = line.strip_prefix('#')?;
    let (k, v) = body.split_once('=')?;
    let k = k.trim();
    is_key(k).then(|| (k, v.trim()))
}

pub fn format_spectrum(s: &Spectrum, fmt: &SpectrumFormat) -> Result<String> {
    let mut out = String::from("# probe transmission spectrum\n");
    match fmt.units {
        Units::Khz => {
            out.push_str("# detuning in kHz; internal unit gamma_c = pi x linewidth\n");
            out.push_str(&format!("# {META_LINEWIDTH} = {}\n", format_f64(fmt.scale.linewidth_khz())));
        }
        Units::GammaCNormalized => {
            out.push_str("# detuning in units of the cavity field decay rate gamma_c\n");
        }
    }
    for (k, v) in &s.meta {
        if !is_key(k) || k == META_LINEWIDTH {
            return Err(Error::invalid(format!("metadata key {k:?} cannot be written")));
        }
        if v.contains(['\n', '\r']) || v.trim() != v {
            return Err(Error::invalid(format!("metadata value for {k:?} must be a trimmed single line")));
        }
        out.push_str(&format!("# {k} = {v}\n"));
    }
    let col = match fmt.units {
        Units::Khz => "detuning_khz",
        Units::GammaCNormalized => "detuning",
    };
    out.push_str(col);
    out.push_str(",value");
    if s.has_sigma() {
        out.push_str(",sigma");
    }
    out.push('\n');
    for p in s.points() {
        let d = match fmt.units {
            Units::Khz => fmt.scale.internal_to_khz(p.detuning),
            Units::GammaCNormalized => p.detuning,
        };
        out.push_str(&format_f64(d));
        out.push(',');
        out.push_str(&format_f64(p.value));
        if let Some(sig) = p.sigma {
            out.push(',');
            out.push_str(&format_f64(sig));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses spectrum CSV text. `default_scale` converts kHz detunings unless
/// the file states its own `linewidth_khz`.
pub fn parse_spectrum(text: &str, source: &str, default_scale: &UnitScale) -> Result<Spectrum> {
    let perr = |line: usize, msg: String| Error::Parse { path: source.to_string(), line, msg };
    let mut meta = std::collections::BTreeMap::new();
    let mut scale = *default_scale;
    let mut header: Option<(Units, bool)> = None;
    let mut rows: Vec<(usize, f64, f64, Option<f64>)> = Vec::new();
    let mut sigma_state: Option<bool> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if header.is_none() {
                if let Some((k, v)) = meta_line(line) {
                    if k == META_LINEWIDTH {
                        let lw: f64 = v.parse().map_err(|_| perr(lineno, format!("bad {META_LINEWIDTH} {v:?}")))?;
                        scale = UnitScale::from_linewidth_khz(lw).map_err(|e| perr(lineno, e.to_string()))?;
                    } else {
                        meta.insert(k.to_string(), v.to_string());
                    }
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some((units, with_sigma)) = header else {
            let units = match fields.first().copied() {
                Some("detuning_khz") => Units::Khz,
                Some("detuning") => Units::GammaCNormalized,
                _ => return Err(perr(lineno, format!("expected header `detuning_khz,value[,sigma]`, got {line:?}"))),
            };
            let with_sigma = match fields.get(1..) {
                Some(["value"]) => false,
                Some(["value", "sigma"]) => true,
                _ => return Err(perr(lineno, format!("expected header `detuning_khz,value[,sigma]`, got {line:?}"))),
            };
            header = Some((units, with_sigma));
            continue;
        };
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| perr(lineno, format!("cannot parse {what} {s:?}")))
        };
        let (d, v, sig) = match (fields.len(), with_sigma) {
            (2, false) => (num(fields[0], "detuning")?, num(fields[1], "value")?, None),
            (3, true) | (2, true) => {
                let sig = match fields.get(2) {
                    Some(s) if !s.is_empty() => Some(num(s, "sigma")?),
                    _ => None,
                };
                (num(fields[0], "detuning")?, num(fields[1], "value")?, sig)
            }
            (3, false) => return Err(Error::MixedSigmaPresence { path: source.into(), line: lineno }),
            (n, _) => return Err(perr(lineno, format!("expected {} fields, got {n}", 2 + with_sigma as usize))),
        };
        match sigma_state {
            None => sigma_state = Some(sig.is_some()),
            Some(st) if st != sig.is_some() => {
                return Err(Error::MixedSigmaPresence { path: source.into(), line: lineno });
            }
            _ => {}
        }
        if let Some(s) = sig {
            if !(s > 0.0 && s.is_finite()) {
                return Err(perr(lineno, format!("sigma must be positive, got {s}")));
            }
        }
        let d = match units {
            Units::Khz => scale.khz_to_internal(d),
            Units::GammaCNormalized => d,
        };
        if !d.is_finite() {
            return Err(perr(lineno, "detuning must be finite".into()));
        }
        if let Some(&(_, prev, _, _)) = rows.last() {
            if !(d > prev) {
                return Err(Error::NonMonotoneDetunings { path: source.into(), line: lineno });
            }
        }
        rows.push((lineno, d, v, sig));
    }
    if header.is_none() {
        return Err(perr(text.lines().count().max(1), "missing header line".into()));
    }
    let points = rows.into_iter().map(|(_, detuning, value, sigma)| SpectrumPoint { detuning, value, sigma }).collect();
    let mut s = Spectrum::new(points)?;
    s.meta = meta;
    Ok(s)
}

pub fn read_spectrum_with(path: &Path, default_scale: &UnitScale) -> Result<Spectrum> {
    let text = read_text(path)?;
    parse_spectrum(&text, &path.display().to_string(), default_scale)
}

/// Reads a spectrum CSV using the reference 17.5 kHz linewidth unless the
/// file states another.
pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    read_spectrum_with(path, &UnitScale::default())
}

pub fn write_spectrum_with(s: &Spectrum, path: &Path, fmt: &SpectrumFormat) -> Result<()> {
    write_atomic(path, format_spectrum(s, fmt)?.as_bytes())
}

pub fn write_spectrum(s: &Spectrum, path: &Path) -> Result<()> {
    write_spectrum_with(s, path, &SpectrumFormat::default())
}
