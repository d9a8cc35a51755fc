use gmdl_core::bounds::random_measure;
use gmdl_core::divergences::{divergence, DivergenceKind, QuadratureSpec};
use gmdl_core::robust::{
    build_covering, default_clean, hoeffding_radius, sample_contaminated, Contamination, ContaminationModel,
    YatracosCovering,
};
use gmdl_core::MixingMeasure;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::sync::OnceLock;

fn covering() -> &'static YatracosCovering {
    static COVER: OnceLock<YatracosCovering> = OnceLock::new();
    COVER.get_or_init(|| build_covering(1.0, 1, 0.1, 400).unwrap())
}

fn quad() -> QuadratureSpec {
    QuadratureSpec::default().with_tol(1e-12, 1e-10)
}

fn tv(a: &MixingMeasure, b: &MixingMeasure) -> f64 {
    divergence(DivergenceKind::Tv, a, b, &quad()).unwrap().value
}

/// `P(A)` for every Yatracos set `A`, from the exact interval representation.
fn set_masses(model: &ContaminationModel, cover: &YatracosCovering) -> Vec<f64> {
    cover.sets().iter().map(|s| model.probability(s.intervals.as_deref().unwrap()).unwrap()).collect()
}

#[test]
fn coarse_tolerance_needs_few_candidates() {
    let coarse = build_covering(1.0, 1, 0.5, 400).unwrap();
    assert!(coarse.len() <= 10, "{}", coarse.len());
    for i in 0..coarse.len() {
        for j in 0..i {
            assert!(tv(&coarse.candidates()[i], &coarse.candidates()[j]) > 0.0);
        }
    }
}

#[test]
fn random_mixtures_are_covered() {
    let cover = covering();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for i in 0..50 {
        let mix = random_measure(&mut rng, 1, 1.0, 1 + i % 4).unwrap();
        let best = cover.candidates().iter().map(|c| tv(&mix, c)).fold(f64::INFINITY, f64::min);
        assert!(best <= cover.eta_actual() + 1e-9, "mixture {i}: {best} > {}", cover.eta_actual());
    }
}

#[test]
fn clean_samples_from_a_candidate_are_recovered() {
    let cover = covering();
    for k in [0, cover.len() / 2, cover.len() - 1] {
        let truth = cover.candidates()[k].clone();
        let model = ContaminationModel::new(truth.clone(), 0.0, Contamination::PointMass { at: vec![3.0] }).unwrap();
        let samples = sample_contaminated(&model, 10_000, 17 + k as u64).unwrap();
        let est = cover.estimate_index(&samples).unwrap();
        let err = tv(&cover.candidates()[est], &truth);
        assert!(err <= 2.0 * cover.eta(), "candidate {k}: TV {err}");
    }
}

#[test]
fn far_point_mass_obeys_the_yatracos_inequality() {
    let cover = covering();
    let clean = default_clean(1.0).unwrap();
    let eta_pi = cover.candidates().iter().map(|c| tv(c, &clean)).fold(f64::INFINITY, f64::min);
    for (r, eps) in [0.0, 0.05, 0.1].into_iter().cycle().take(30).enumerate() {
        let model = ContaminationModel::new(clean.clone(), eps, Contamination::PointMass { at: vec![3.0] }).unwrap();
        let samples = sample_contaminated(&model, 2_000, 1_000 + r as u64).unwrap();
        let truth = set_masses(&model, cover);
        let emp = cover.empirical(&samples).unwrap();
        let dist = truth.iter().zip(&emp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let est = &cover.candidates()[cover.estimate_index(&samples).unwrap()];
        let err = tv(est, &clean);
        assert!(err <= 3.0 * eta_pi + 3.0 * eps + 2.0 * dist + 1e-9, "replicate {r}: {err}");
    }
}

#[test]
fn hoeffding_radius_formula() {
    let r = hoeffding_radius(90, 1000, 0.05).unwrap();
    let expected = (2.0 * ((180f64).ln() + (20f64).ln()) / 1000.0).sqrt();
    assert!((r - expected).abs() < 1e-15);
}

#[test]
fn sampling_is_reproducible() {
    let model = ContaminationModel::new(default_clean(1.0).unwrap(), 0.1, Contamination::Uniform { lo: -5.0, hi: 5.0 }).unwrap();
    assert_eq!(sample_contaminated(&model, 500, 9).unwrap(), sample_contaminated(&model, 500, 9).unwrap());
    assert_ne!(sample_contaminated(&model, 500, 9).unwrap(), sample_contaminated(&model, 500, 10).unwrap());
}

#[test]
fn point_mass_probability_is_exact() {
    let model = ContaminationModel::new(MixingMeasure::dirac(&[0.0], 1.0).unwrap(), 0.2, Contamination::PointMass { at: vec![3.0] })
        .unwrap();
    let half = model.probability(&[(0.0, f64::INFINITY)]).unwrap();
    assert!((half - (0.8 * 0.5 + 0.2)).abs() < 1e-15);
}

fn measure() -> impl Strategy<Value = MixingMeasure> {
    (any::<u64>(), 1usize..=3).prop_map(|(seed, k)| random_measure(&mut ChaCha20Rng::seed_from_u64(seed), 1, 1.0, k).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn set_distance_is_a_pseudo_metric(a in measure(), b in measure(), c in measure()) {
        let cover = covering();
        let v = |m: &MixingMeasure| -> Vec<f64> {
            (0..cover.sets().len()).map(|s| cover.set_probability(m, s).unwrap()).collect()
        };
        let (va, vb, vc) = (v(&a), v(&b), v(&c));
        let d = YatracosCovering::dist_vectors;
        prop_assert_eq!(d(&va, &va), 0.0);
        prop_assert_eq!(d(&va, &vb), d(&vb, &va));
        prop_assert!(d(&va, &vc) <= d(&va, &vb) + d(&vb, &vc) + 1e-15);
        // set distances never exceed total variation
        prop_assert!(d(&va, &vb) <= tv(&a, &b) + 1e-9);
    }
}
