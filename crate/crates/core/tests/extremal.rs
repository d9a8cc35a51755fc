use gmdl_core::extremal::{estimate_cn, monomial_ratio, nikolskii_check, restricted_range_check, PolyInBasis};
use gmdl_core::quad::Tolerance;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// `‖xⁿ‖₁/‖xⁿ‖₂` with `‖xⁿ‖₁ = 2^{n/2}Γ((n+1)/2)/√π` and `‖xⁿ‖₂² = (2n−1)!!`.
fn monomial_oracle(n: u32) -> f64 {
    let nf = n as f64;
    let l1 = 2f64.powf(nf / 2.0) * libm::tgamma((nf + 1.0) / 2.0) / std::f64::consts::PI.sqrt();
    let dfact: f64 = (1..=n).map(|j| (2 * j - 1) as f64).product();
    l1 / dfact.sqrt()
}

#[test]
fn monomial_ratio_matches_gamma_form() {
    for n in 0..=12 {
        let (a, b) = (monomial_ratio(n), monomial_oracle(n));
        assert!((a - b).abs() <= 1e-10 * b, "n={n}: {a} vs {b}");
    }
}

#[test]
fn degree_one_is_bounded_by_mean_absolute_normal() {
    let est = estimate_cn(1, 1, 8, 3).unwrap();
    assert!(est.estimate <= (2.0 / std::f64::consts::PI).sqrt() + 1e-12);
}

#[test]
fn sandwich_with_few_restarts() {
    for n in 1..=8 {
        let est = estimate_cn(n, 1, 6, 9).unwrap();
        let lower = est.lower_bound.expect("one-dimensional lower bound");
        assert!(lower <= est.estimate, "n={n}");
        assert!(est.estimate <= est.monomial_ratio * (1.0 + 1e-12), "n={n}");
    }
}

#[test]
fn nikolskii_holds_for_random_polynomials() {
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    for i in 0..200u32 {
        let d = 1 + (i % 2) as usize;
        let n = i % 11;
        let p = PolyInBasis::random_unit(d, n, &mut rng).unwrap();
        let per_axis = if d == 1 { 801 } else { 81 };
        let c = nikolskii_check(&p, per_axis).unwrap();
        assert!(c.ok, "case {i}: {c:?}");
    }
}

#[test]
fn constant_polynomial_attains_equality() {
    for d in 1..=2 {
        let mut coeffs = vec![0.0; 1];
        coeffs[0] = 1.0;
        let p = PolyInBasis::new(d, 0, coeffs).unwrap();
        let c = nikolskii_check(&p, 41).unwrap();
        let peak = (2.0 * std::f64::consts::PI).powf(-0.25 * d as f64);
        assert!((c.sup_lhs - peak).abs() < 1e-15 && (c.rhs - peak).abs() < 1e-15);
    }
}

#[test]
fn restricted_range_degree_eight() {
    let r = restricted_range_check(8, 1, 2.0, Tolerance::default()).unwrap();
    assert!(r.trace <= r.bound, "{r:?}");
}
