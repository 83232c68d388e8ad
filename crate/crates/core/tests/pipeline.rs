use cavlattice::analysis::{estimate_splitting, find_peaks, infer_xi_ax};
use cavlattice::fit::{batch_fit, linear_regression, regress_gef_vs_n, BatchRow};
use cavlattice::io::RunConfig;
use cavlattice::model::model_curve;
use cavlattice::physics::{coupling_detuned, AtomCouplingParams, CavityParams};
use cavlattice::synth::{default_grid, generate_series, trace_params, REFERENCE_LADDER};
use cavlattice::{FitConfig, NoiseSpec, Spectrum, TraceModel};

struct Setup {
    base: AtomCouplingParams,
    cav: CavityParams,
}

fn setup(xi_ax: f64) -> Setup {
    let cfg = RunConfig::default();
    let cav = cfg.cavity_params().unwrap();
    let mut base = cfg.atom_params().unwrap();
    base.xi_ax = xi_ax;
    Setup { base, cav }
}

fn series(s: &Setup, n_list: &[u64], noise: &NoiseSpec) -> Vec<Spectrum> {
    let n_max = *n_list.iter().max().unwrap();
    let grid = default_grid(n_max, &s.base, &s.cav, 801, 6.0).unwrap();
    generate_series(n_list, &s.base, &s.cav, &grid, &TraceModel::default(), noise).unwrap()
}

fn g_true(s: &Setup, n: u64) -> f64 {
    n as f64 * coupling_detuned(&s.base) * s.base.xi_rad * s.base.xi_ax / s.cav.gamma_c
}

fn fits(rows: &[BatchRow]) -> Vec<&cavlattice::FitResult> {
    rows.iter().map(|r| r.outcome.as_ref().unwrap()).collect()
}

#[test]
fn ladder_has_eleven_traces_with_doublet_at_largest_n() {
    let s = setup(0.12);
    let sp = series(&s, &REFERENCE_LADDER, &NoiseSpec::none());
    assert_eq!(sp.len(), 11);
    let last = sp.last().unwrap();
    assert_eq!(last.n_atoms(), Some(2_760_000));
    let peaks = find_peaks(last, 0.01);
    assert_eq!(peaks.len(), 2);
    let g = g_true(&s, 2_760_000);
    let sep = peaks[1].detuning - peaks[0].detuning;
    // overlapping modes pull the maxima inward by about γ_c²/g_ef each
    assert!((sep - 2.0 * g).abs() <= 2.0 / g, "separation {sep} vs {}", 2.0 * g);
}

#[test]
fn noiseless_ladder_recovers_generator() {
    let s = setup(0.12);
    let sp = series(&s, &REFERENCE_LADDER, &NoiseSpec::none());
    let rows = batch_fit(&sp, &FitConfig::default()).unwrap();
    let trace = TraceModel::default();
    for (row, f) in rows.iter().zip(fits(&rows)) {
        let (offset, truth) = trace_params(row.n_atoms, &s.base, &s.cav, &trace).unwrap();
        assert!((f.params.g_ef - truth.g_ef).abs() <= 1e-6 * truth.g_ef.max(1.0), "N {}", row.n_atoms);
        assert!((f.delta_offset - offset).abs() <= 1e-6);
        assert!((f.params.scale_s - 1.0).abs() <= 1e-6);
        if truth.g_ef > 1.0 {
            // R grows linearly with N above threshold
            assert!((f.params.retro_r - truth.retro_r).abs() <= 1e-6);
            assert!(f.params.retro_r > 0.0);
        } else if row.n_atoms > 0 {
            assert!(f.params.retro_r.abs() <= 1e-6, "N {} R {}", row.n_atoms, f.params.retro_r);
        }
        assert_eq!(row.below_threshold(1.0), Some(truth.g_ef <= 1.0));
    }
}

#[test]
fn all_empty_series_fits_zero_coupling() {
    let s = setup(0.12);
    let sp = series(&s, &[0, 0, 0], &NoiseSpec::none());
    let rows = batch_fit(&sp, &FitConfig::default()).unwrap();
    for f in fits(&rows) {
        assert!(f.params.g_ef < 1e-3, "g {}", f.params.g_ef);
        assert!(f.chi_weakly_identified);
    }
    assert!(regress_gef_vs_n(&rows).is_err());
}

/// Separation of the two model maxima from a dense evaluation.
fn dense_splitting(p: &cavlattice::SpectrumModelParams) -> f64 {
    let x: Vec<f64> = (0..=400_000).map(|i| -20.0 + 1e-4 * i as f64).collect();
    let curve = model_curve(&x, p).unwrap();
    let argmax = |neg: bool| {
        curve
            .points()
            .iter()
            .filter(|q| (q.detuning < 0.0) == neg)
            .max_by(|a, b| a.value.total_cmp(&b.value))
            .unwrap()
            .detuning
    };
    argmax(false) - argmax(true)
}

#[test]
fn splitting_estimate_tracks_fit_and_xi_ax_for_strong_coupling() {
    let s = setup(0.4);
    let sp = series(&s, &REFERENCE_LADDER, &NoiseSpec::none());
    let rows = batch_fit(&sp, &FitConfig::default()).unwrap();
    let step = {
        let x: Vec<f64> = sp[0].detunings().collect();
        x[1] - x[0]
    };
    let mut checked = 0;
    for (spec, (row, f)) in sp.iter().zip(rows.iter().zip(fits(&rows))) {
        if f.params.g_ef <= 3.0 {
            continue;
        }
        let split = estimate_splitting(spec).unwrap();
        let (_, truth) = trace_params(row.n_atoms, &s.base, &s.cav, &TraceModel::default()).unwrap();
        assert!((split - dense_splitting(&truth)).abs() <= 2.0 * step, "N {}", row.n_atoms);
        // with ε < 1 the maxima sit outside ±g_ef; the excess drops below 5% from g_ef ≈ 3.2
        if f.params.g_ef >= 3.5 {
            let rel = (0.5 * split / f.params.g_ef - 1.0).abs();
            assert!(rel <= 0.05, "N {}: splitting/2 {} vs fit {}", row.n_atoms, 0.5 * split, f.params.g_ef);
            let xi = infer_xi_ax(split * s.cav.gamma_c, &s.base.with_atoms(row.n_atoms)).unwrap();
            assert!((xi.value / s.base.xi_ax - 1.0).abs() <= 0.05, "xi_ax {}", xi.value);
            assert!(!xi.out_of_range);
            checked += 1;
        }
    }
    assert!(checked >= 3);
}

#[test]
fn noisy_ladder_is_statistically_consistent() {
    let s = setup(0.12);
    let sigma = 0.01;
    let sp = series(&s, &REFERENCE_LADDER, &NoiseSpec::gaussian(sigma, 2005));
    let rows = batch_fit(&sp, &FitConfig::default()).unwrap();
    for f in fits(&rows) {
        let dof = (f.n_points - f.n_free) as f64;
        let band = 4.0 * (2.0 / dof).sqrt();
        assert!((f.reduced_chi_square() - 1.0).abs() <= band, "chi2/dof {}", f.reduced_chi_square());
    }
    let reg = regress_gef_vs_n(&rows).unwrap();
    assert!(reg.intercept.abs() <= 3.0 * reg.intercept_sigma, "{reg:?}");
}

#[test]
fn regression_on_exact_line() {
    let pts: Vec<(f64, f64)> = (0..11).map(|i| (i as f64 * 2.5e5, 3e-7 * i as f64 * 2.5e5 + 0.1)).collect();
    let reg = linear_regression(&pts).unwrap();
    assert!((reg.r_squared - 1.0).abs() <= 1e-12);
    assert!((reg.slope / 3e-7 - 1.0).abs() <= 1e-12);
}
