// negated comparisons also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::{FRAC_PI_4, PI};

use cavlattice::fit::fit_spectrum;
use cavlattice::model::{model_curve, wrap_phase};
use cavlattice::synth::generate_spectrum;
use cavlattice::{FitConfig, NoiseSpec, Spectrum, SpectrumModelParams, SpectrumPoint};
use proptest::prelude::*;

fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn scaled(s: &Spectrum, c: f64) -> Spectrum {
    let pts = s
        .points()
        .iter()
        .map(|p| SpectrumPoint { detuning: p.detuning, value: c * p.value, sigma: p.sigma.map(|v| c * v) })
        .collect();
    Spectrum::new(pts).unwrap()
}

#[test]
fn empty_cavity_fit_is_lorentzian_with_unidentified_phase() {
    let truth = SpectrumModelParams::new(0.0, 0.0, 0.0, 1.0, 0.93, 1.0).unwrap();
    let data = model_curve(&grid(601, -10.0, 10.0), &truth).unwrap();
    let f = fit_spectrum(&data, &FitConfig::default(), None).unwrap();
    assert!(f.params.g_ef < 1e-3);
    assert!(f.chi_weakly_identified);
    assert!(!(f.param_sigmas.chi <= FRAC_PI_4));
    assert!(!(f.param_sigmas.retro_r <= 1.0));
    // fitted curve: half maximum at ±γ_c
    let p = f.params;
    let at = |d: f64| model_curve(&[d - f.delta_offset], &p).unwrap().points()[0].value;
    assert!((at(1.0) / at(0.0) - 0.5).abs() < 1e-4);
}

#[test]
fn reported_cost_dominates_every_start() {
    let truth = SpectrumModelParams::new(2.2, -1.1, 0.3, 0.8, 0.93, 1.0).unwrap();
    let data = generate_spectrum(&grid(401, -8.0, 8.0), &truth, &NoiseSpec::gaussian(0.01, 3)).unwrap();
    let f = fit_spectrum(&data, &FitConfig::default(), None).unwrap();
    assert!(!f.start_costs.is_empty());
    // equal-cost minima count as ties and go to the smaller |χ|
    for &c in &f.start_costs {
        assert!(f.cost <= c * (1.0 + 1e-12) + 1e-25, "{} > {c}", f.cost);
    }
    assert!(f.cost_history.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*f.cost_history.last().unwrap(), f.cost);
}

#[test]
fn warm_start_is_used_and_helps() {
    let truth = SpectrumModelParams::new(4.0, 0.6, 0.25, 1.0, 0.93, 1.0).unwrap();
    let data = model_curve(&grid(401, -9.0, 9.0), &truth).unwrap();
    let cold = fit_spectrum(&data, &FitConfig::default(), None).unwrap();
    let warm = fit_spectrum(&data, &FitConfig::default(), Some(&cold.as_start())).unwrap();
    assert!(warm.cost <= cold.cost);
    assert!((warm.params.g_ef - 4.0).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn phase_shift_by_full_turn_changes_nothing(
        g in 1.5f64..5.0, chi in -3.0f64..3.0, r in 0.0f64..0.5, seed in 0u64..1000,
    ) {
        let x = grid(301, -9.0, 9.0);
        let a = SpectrumModelParams::new(g, chi, r, 1.0, 0.93, 1.0).unwrap();
        let b = SpectrumModelParams::new(g, chi + 2.0 * PI, r, 1.0, 0.93, 1.0).unwrap();
        let noise = NoiseSpec::gaussian(0.005, seed);
        let fa = fit_spectrum(&generate_spectrum(&x, &a, &noise).unwrap(), &FitConfig::default(), None).unwrap();
        let fb = fit_spectrum(&generate_spectrum(&x, &b, &noise).unwrap(), &FitConfig::default(), None).unwrap();
        prop_assert!((fa.cost - fb.cost).abs() <= 1e-9 * fa.cost.max(1e-300));
        prop_assert!(wrap_phase(fa.params.chi - fb.params.chi).abs() <= 1e-6);
        prop_assert!((fa.params.g_ef - fb.params.g_ef).abs() <= 1e-6);
    }

    #[test]
    fn fitted_scale_follows_data_scale(
        g in 1.5f64..5.0, chi in -3.0f64..3.0, c in 0.01f64..100.0, seed in 0u64..1000,
    ) {
        let x = grid(301, -9.0, 9.0);
        let p = SpectrumModelParams::new(g, chi, 0.2, 1.0, 0.93, 1.0).unwrap();
        let data = generate_spectrum(&x, &p, &NoiseSpec::gaussian(0.005, seed)).unwrap();
        let f1 = fit_spectrum(&data, &FitConfig::default(), None).unwrap();
        let fc = fit_spectrum(&scaled(&data, c), &FitConfig::default(), None).unwrap();
        prop_assert!((fc.params.scale_s / (c * f1.params.scale_s) - 1.0).abs() <= 1e-6);
        prop_assert!((fc.params.g_ef - f1.params.g_ef).abs() <= 1e-6 * f1.params.g_ef);
        prop_assert!(wrap_phase(fc.params.chi - f1.params.chi).abs() <= 1e-6);
        prop_assert!((fc.params.retro_r - f1.params.retro_r).abs() <= 1e-6);
        prop_assert!((fc.delta_offset - f1.delta_offset).abs() <= 1e-6);
    }
}
