use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cavlattice::fit::{batch_fit, fit_spectrum, BatchRow};
use cavlattice::io::{
    format_f64, read_results, read_spectrum_with, records_from_rows, write_atomic, write_config, write_results,
    write_spectrum_with, FitRecord, ResultRecord, ResultsDocument, RunConfig, SpectrumFormat,
};
use cavlattice::model::model_curve;
use cavlattice::spectrum::META_TRACE;
use cavlattice::synth::{default_grid, generate_series, trace_params};
use cavlattice::{NoiseKind, Spectrum};

use crate::report::Report;
use crate::{AnalyzeArgs, Failure, FitArgs, SimulateArgs};

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))
}

fn format_of(cfg: &RunConfig) -> Result<SpectrumFormat, Failure> {
    Ok(SpectrumFormat { units: cfg.units, scale: cfg.cavity.unit_scale()? })
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<(), Failure> {
    let n_list = if args.ladder { cfg.synth.ladder.clone() } else { args.n_atoms.clone() };
    let cav = cfg.cavity_params()?;
    let base = cfg.atom_params()?;
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let grid = default_grid(n_max, &base, &cav, cfg.synth.points, cfg.synth.margin)?;
    let mut noise = cfg.synth.noise;
    if let Some(seed) = args.seed {
        noise.seed = seed;
    }
    if args.noiseless {
        noise.kind = NoiseKind::None;
    }
    let series = generate_series(&n_list, &base, &cav, &grid, &cfg.synth.trace, &noise)?;

    create_dir(&args.out)?;
    let fmt = format_of(cfg)?;
    let mut manifest = String::from(
        "# generated spectra and generator truth; g_ef and delta_offset in units of gamma_c\n\
         trace,n_atoms,file,g_ef,delta_offset,chi,retro_r,scale_s,epsilon\n",
    );
    for (k, (s, &n)) in series.iter().zip(&n_list).enumerate() {
        let name = format!("trace_{:02}.csv", k + 1);
        write_spectrum_with(s, &args.out.join(&name), &fmt)?;
        let (offset, p) = trace_params(n, &base, &cav, &cfg.synth.trace)?;
        let nums = [p.g_ef, offset + 0.0, p.chi, p.retro_r, p.scale_s, p.epsilon].map(format_f64).join(",");
        let _ = writeln!(manifest, "{},{n},{name},{nums}", k + 1);
    }
    write_atomic(&args.out.join("manifest.csv"), manifest.as_bytes())?;
    let mut used = cfg.clone();
    used.synth.noise = noise;
    write_config(&used, &args.out.join("config.toml"))?;
    println!("wrote {} spectra to {}", series.len(), args.out.display());
    Ok(())
}

fn curve_name(source: &Path) -> String {
    let stem = source.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    format!("fit_{stem}.csv")
}

fn write_curve(
    out: &Path,
    source: &Path,
    data: &Spectrum,
    rec: &FitRecord,
    fmt: &SpectrumFormat,
) -> Result<(), Failure> {
    let f = cavlattice::SpectrumModelParams {
        g_ef: rec.g_ef,
        chi: rec.chi,
        retro_r: rec.retro_r,
        scale_s: rec.scale_s,
        epsilon: rec.epsilon,
        gamma_c: rec.gamma_c,
    };
    let shifted: Vec<f64> = data.detunings().map(|d| d - rec.delta_offset).collect();
    let model = model_curve(&shifted, &f)?;
    let values: Vec<f64> = model.values().collect();
    let x: Vec<f64> = data.detunings().collect();
    let mut curve = Spectrum::from_xy(&x, &values)?;
    curve.meta = data.meta.clone();
    curve.meta.insert("source".into(), source.display().to_string());
    write_spectrum_with(&curve, &out.join(curve_name(source)), fmt)?;
    Ok(())
}

pub fn fit(cfg: &RunConfig, args: &FitArgs) -> Result<(), Failure> {
    let mut fit_cfg = cfg.fit.clone();
    if let Some(r) = args.fix_r {
        fit_cfg.fixed_r = Some(r);
    }
    if args.lock_r_below_threshold {
        fit_cfg.lock_r_zero_below_threshold = true;
    }
    fit_cfg.validate()?;
    let scale = cfg.cavity.unit_scale()?;

    let mut loaded: Vec<(PathBuf, Spectrum)> = Vec::new();
    let mut records: Vec<ResultRecord> = Vec::new();
    let mut read_failures: Vec<Failure> = Vec::new();
    for path in &args.inputs {
        match read_spectrum_with(path, &scale) {
            Ok(s) => loaded.push((path.clone(), s)),
            Err(e) => {
                eprintln!("warning: {e}");
                records.push(ResultRecord {
                    n_atoms: None,
                    trace: None,
                    source: Some(path.display().to_string()),
                    error: Some(e.to_string()),
                    fit: None,
                });
                read_failures.push(e.into());
            }
        }
    }

    let spectra: Vec<Spectrum> = loaded.iter().map(|(_, s)| s.clone()).collect();
    let sources: Vec<String> = loaded.iter().map(|(p, _)| p.display().to_string()).collect();
    if !spectra.is_empty() {
        if spectra.iter().all(|s| s.n_atoms().is_some()) {
            let rows: Vec<BatchRow> = batch_fit(&spectra, &fit_cfg)?;
            records.extend(records_from_rows(&rows, &sources));
        } else {
            log::info!("not every spectrum states n_atoms; fitting independently");
            for (src, s) in sources.iter().zip(&spectra) {
                let outcome = fit_spectrum(s, &fit_cfg, None);
                records.push(ResultRecord {
                    n_atoms: s.n_atoms(),
                    trace: s.meta.get(META_TRACE).cloned(),
                    source: Some(src.clone()),
                    error: outcome.as_ref().err().map(|e| e.to_string()),
                    fit: outcome.as_ref().ok().map(FitRecord::from_fit),
                });
            }
        }
    }

    create_dir(&args.out)?;
    let fmt = format_of(cfg)?;
    let mut ok = 0usize;
    for rec in &records {
        let (Some(fit), Some(src)) = (&rec.fit, &rec.source) else {
            if let (Some(err), Some(src)) = (&rec.error, &rec.source) {
                eprintln!("warning: {src}: {err}");
            }
            continue;
        };
        let src = PathBuf::from(src);
        let data = &loaded.iter().find(|(p, _)| *p == src).expect("fitted source was loaded").1;
        write_curve(&args.out, &src, data, fit, &fmt)?;
        if !fit.converged {
            eprintln!("warning: {}: fit did not converge", src.display());
        }
        ok += 1;
    }
    let doc = ResultsDocument::new(cfg.cavity.linewidth_khz, records);
    write_results(&doc, &args.out.join("results.toml"))?;
    println!("fitted {ok} of {} spectra; results in {}", args.inputs.len(), args.out.join("results.toml").display());
    if ok > 0 {
        return Ok(());
    }
    Err(read_failures.into_iter().next().unwrap_or_else(|| Failure::Numerical("every fit failed".into())))
}

pub fn analyze(cfg: &RunConfig, args: &AnalyzeArgs) -> Result<(), Failure> {
    let doc = read_results(&args.results)?;
    let report = Report::new(cfg, &doc)?;
    let text = report.text();
    print!("{text}");
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_atomic(&dir.join("report.txt"), text.as_bytes())?;
        write_atomic(&dir.join("fit_parameters.csv"), report.table().as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_names_follow_source() {
        assert_eq!(curve_name(Path::new("/a/trace_03.csv")), "fit_trace_03.csv");
    }
}
