use gmdl_core::divergences::{chi2_translate_bound, divergence, phi_norm, DivergenceKind, QuadratureSpec};
use gmdl_core::mixtures::{g_ratio, mixture_density, mixture_gradient, moment_diffs};
use gmdl_core::MixingMeasure;
use proptest::prelude::*;

fn dirac(mu: f64) -> MixingMeasure {
    MixingMeasure::dirac(&[mu], 2.0).unwrap()
}

/// Up to three atoms in `[−1, 1]` with weights bounded away from zero.
fn measure() -> impl Strategy<Value = MixingMeasure> {
    prop::collection::vec((-1.0f64..1.0, 0.05f64..1.0), 1..=3).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| p.1).sum();
        let atoms: Vec<f64> = parts.iter().map(|p| p.0).collect();
        let mut weights: Vec<f64> = parts.iter().map(|p| p.1 / total).collect();
        let head: f64 = weights[1..].iter().sum();
        weights[0] = 1.0 - head;
        MixingMeasure::new(1, 1.0, atoms, weights).unwrap()
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn shifted_unit_normals_match_closed_forms() {
    let quad = QuadratureSpec::default();
    let zero = dirac(0.0);
    for mu in [0.1, 0.5, 1.0, 2.0] {
        let p = dirac(mu);
        let tv = divergence(DivergenceKind::Tv, &p, &zero, &quad).unwrap().value;
        let h2 = divergence(DivergenceKind::H2, &p, &zero, &quad).unwrap().value;
        let chi2 = divergence(DivergenceKind::Chi2, &p, &zero, &quad).unwrap().value;
        let kl = divergence(DivergenceKind::Kl, &p, &zero, &quad).unwrap().value;
        // 2Φ(μ/2) − 1 = erf(μ/(2√2))
        assert!(rel(tv, libm::erf(mu / (2.0 * 2f64.sqrt()))) < 1e-8, "TV at {mu}");
        assert!(rel(h2, -libm::expm1(-mu * mu / 8.0)) < 1e-8, "H2 at {mu}");
        assert!(rel(chi2, libm::expm1(mu * mu)) < 1e-8, "chi2 at {mu}");
        assert!(rel(kl, mu * mu / 2.0) < 1e-8, "KL at {mu}");
    }
}

#[test]
fn two_point_density_at_origin() {
    let mix = MixingMeasure::new(1, 1.0, vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
    let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    assert!((mixture_density(&mix, &[0.0]).unwrap() - phi1).abs() < 1e-16);
    assert!((phi1 - 0.241_970_7).abs() < 1e-7);
}

#[test]
fn symmetric_pair_has_only_even_moment_differences() {
    let pi = MixingMeasure::new(1, 1.0, vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
    let m = moment_diffs(&pi, &dirac(0.0).with_radius(1.0).unwrap(), 12).unwrap();
    for (k, dk) in m.delta.iter().enumerate().skip(1) {
        let target = if k % 2 == 0 { 1.0 } else { 0.0 };
        assert!((dk - target).abs() < 1e-15, "Δ_{k} = {dk}");
    }
}

#[test]
fn translate_bound_dominates_chi2() {
    let quad = QuadratureSpec::default();
    let (p, q) = (dirac(0.3), dirac(0.0));
    let b = chi2_translate_bound(&p, &q, &quad).unwrap();
    assert!(b.value >= libm::expm1(0.09) * (1.0 - 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sandwich_inequalities(p in measure(), q in measure()) {
        let quad = QuadratureSpec::default();
        let tv = divergence(DivergenceKind::Tv, &p, &q, &quad).unwrap().value;
        let h = divergence(DivergenceKind::H, &p, &q, &quad).unwrap().value;
        let chi2 = divergence(DivergenceKind::Chi2, &p, &q, &quad).unwrap().value;
        let kl = divergence(DivergenceKind::Kl, &p, &q, &quad).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&tv));
        prop_assert!(h * h <= tv + 1e-9);
        prop_assert!(tv <= 2f64.sqrt() * h + 1e-9);
        prop_assert!(h * h <= chi2 + 1e-9);
        prop_assert!(2.0 * h * h <= kl + 1e-9);
    }

    #[test]
    fn total_variation_is_symmetric(p in measure(), q in measure()) {
        let quad = QuadratureSpec::default();
        let a = divergence(DivergenceKind::Tv, &p, &q, &quad).unwrap();
        let b = divergence(DivergenceKind::Tv, &q, &p, &quad).unwrap();
        prop_assert!((a.value - b.value).abs() <= a.error_bound + b.error_bound + 1e-15);
    }

    #[test]
    fn l1_norm_of_g_is_twice_tv(p in measure(), q in measure()) {
        let quad = QuadratureSpec::default();
        let tv = divergence(DivergenceKind::Tv, &p, &q, &quad).unwrap().value;
        let l1 = phi_norm(&p, &q, 1, &quad).unwrap().value;
        prop_assert!((l1 - 2.0 * tv).abs() <= 1e-8 * l1 + 1e-13);
    }

    #[test]
    fn parseval_against_direct_moments(p in measure(), q in measure()) {
        let quad = QuadratureSpec::default();
        let l2 = phi_norm(&p, &q, 2, &quad).unwrap().value;
        let moment = |m: &MixingMeasure, k: i32| -> f64 {
            m.atoms_flat().iter().zip(m.weights()).map(|(a, w)| w * a.powi(k)).sum()
        };
        let mut series = 0.0;
        let mut fact = 1.0;
        for k in 0..=60 {
            if k > 0 {
                fact *= k as f64;
            }
            let dk = moment(&p, k) - moment(&q, k);
            series += dk * dk / fact;
        }
        prop_assert!((l2 * l2 - series).abs() <= 1e-8 * series + 1e-14, "{} vs {series}", l2 * l2);
    }

    #[test]
    fn gradient_matches_central_differences(p in measure(), x in -4.0f64..4.0) {
        let h = 1e-5;
        let fd = (mixture_density(&p, &[x + h]).unwrap() - mixture_density(&p, &[x - h]).unwrap()) / (2.0 * h);
        let g = mixture_gradient(&p, &[x]).unwrap()[0];
        prop_assert!((g - fd).abs() <= 1e-7);
    }

    #[test]
    fn single_atom_ratio_is_an_exponential_tilt(mu in -1.0f64..1.0, x in -5.0f64..5.0) {
        let p = MixingMeasure::dirac(&[mu], 1.0).unwrap();
        let q = MixingMeasure::dirac(&[0.0], 1.0).unwrap();
        let g = g_ratio(&p, &q, &[x]).unwrap();
        let expected = libm::expm1(mu * x - 0.5 * mu * mu);
        prop_assert!((g - expected).abs() <= 1e-13 * (1.0 + expected.abs()));
    }
}
