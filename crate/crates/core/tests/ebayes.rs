use gmdl_core::divergences::QuadratureSpec;
use gmdl_core::ebayes::{
    error_function_sq, floor_for, floor_term, regret, sample_term, tweedie, tweedie_regularized, DenoiserConfig,
    DensitySource,
};
use gmdl_core::mixtures::{mixture_density, mixture_gradient};
use gmdl_core::MixingMeasure;
use proptest::prelude::*;

fn two_point() -> MixingMeasure {
    MixingMeasure::new(1, 1.0, vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap()
}

fn quad() -> QuadratureSpec {
    QuadratureSpec::default().with_tol(1e-13, 1e-10)
}

fn oracle_regret(truth: &MixingMeasure, rho: f64) -> f64 {
    regret(truth, &DenoiserConfig::new(rho, DensitySource::Oracle).unwrap(), &quad()).unwrap().regret
}

#[test]
fn two_point_posterior_mean_is_tanh() {
    let mix = two_point();
    for i in -80..=80 {
        let x = i as f64 * 0.1;
        assert!((tweedie(&mix, &[x]).unwrap()[0] - x.tanh()).abs() < 1e-12, "x={x}");
    }
}

#[test]
fn oracle_regret_vanishes_with_the_floor() {
    let truth = two_point();
    let rhos = [1e-1, 1e-2, 1e-3, 1e-4, 1e-6, 1e-9];
    let values: Vec<f64> = rhos.iter().map(|&r| oracle_regret(&truth, r)).collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
    assert!(*values.last().unwrap() < 1e-8, "{values:?}");
}

#[test]
fn oracle_regret_equals_the_floor_integral() {
    // ∫ (1 − f/(f∨ρ))² f′²/f computed here on a plain Riemann grid
    let truth = two_point();
    let rho = 0.05;
    let h = 1e-3;
    let mut direct = 0.0;
    let mut x: f64 = -12.0;
    while x <= 12.0 {
        let f = mixture_density(&truth, &[x]).unwrap();
        let g = mixture_gradient(&truth, &[x]).unwrap()[0];
        let shrink = 1.0 - f / f.max(rho);
        direct += h * shrink * shrink * g * g / f;
        x += h;
    }
    let r = oracle_regret(&truth, rho);
    assert!((r - direct).abs() < 1e-6 * direct.max(1e-12), "{r} vs {direct}");
    assert!((floor_term(&truth, rho, &quad()).unwrap() - r).abs() < 1e-9);
}

#[test]
fn shifted_plugin_regret_shrinks_with_the_shift() {
    let truth = two_point();
    let mut last = f64::INFINITY;
    for shift in [0.4, 0.2, 0.1, 0.05] {
        let plugin = MixingMeasure::new(1, 1.0, vec![-1.0 + shift, 1.0], vec![0.5, 0.5]).unwrap();
        let cfg = DenoiserConfig::new(1e-8, DensitySource::Plugin(plugin)).unwrap();
        let r = regret(&truth, &cfg, &quad()).unwrap();
        assert!(r.regret > 0.0 && r.regret < last, "shift {shift}: {}", r.regret);
        assert!(r.decomposition_holds());
        last = r.regret;
    }
}

#[test]
fn floored_denoiser_is_continuous_across_the_floor() {
    let mix = two_point();
    let rho = 0.05;
    let h = 1e-4;
    let mut x: f64 = -6.0;
    let mut prev = tweedie_regularized(rho, &mix, &[x]).unwrap()[0];
    while x < 6.0 {
        x += h;
        let cur = tweedie_regularized(rho, &mix, &[x]).unwrap()[0];
        assert!((cur - prev).abs() < 50.0 * h, "jump at {x}");
        prev = cur;
    }
}

#[test]
fn error_function_and_floor() {
    let n = 1000;
    assert!((sample_term(n, 1) - (1000f64).ln().powi(2) / 1000.0).abs() < 1e-15);
    let e2 = error_function_sq(0.0, n, 1, 1.0).unwrap();
    assert!((e2 - sample_term(n, 1)).abs() < 1e-15);
    let rho = floor_for(e2, 1);
    assert!((rho - e2.min((-2.0f64).exp()) / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
}

fn symmetric_prior() -> impl Strategy<Value = MixingMeasure> {
    prop::collection::vec((0.05f64..1.0, 0.1f64..1.0), 1..=3).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| 2.0 * p.1).sum();
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (a, w) in &parts {
            atoms.extend([*a, -*a]);
            weights.extend([w / total, w / total]);
        }
        let rest: f64 = weights[1..].iter().sum();
        weights[0] = 1.0 - rest;
        MixingMeasure::new(1, 1.0, atoms, weights).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn posterior_mean_is_odd_and_inside_the_support(prior in symmetric_prior(), x in -8.0f64..8.0) {
        let a = tweedie(&prior, &[x]).unwrap()[0];
        let b = tweedie(&prior, &[-x]).unwrap()[0];
        prop_assert!((a + b).abs() <= 1e-12);
        let top = prior.atoms_flat().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(a.abs() <= top + 1e-12);
    }

    #[test]
    fn oracle_regret_grows_with_the_floor(prior in symmetric_prior(), lo in -6.0f64..-1.0, step in 0.2f64..2.0) {
        let (small, large) = (lo.exp(), (lo + step).exp());
        prop_assert!(oracle_regret(&prior, small) <= oracle_regret(&prior, large) + 1e-12);
    }
}
