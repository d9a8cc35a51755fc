//! Constants and transfer function of the TV-to-χ² inequality, and end-to-end
//! checks of the inequality on concrete mixture pairs.
//!
//! `C₀` is astronomically large for any useful `δ`, so everything here works
//! with `log C₀`. Infima over continuous parameters are taken on a 512-point
//! log grid followed by golden-section polish; the result is an upper bound
//! on the true infimum, which keeps the checked inequality valid.

use alloc::vec::Vec;

use libm::{exp, floor, log, sqrt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};

use crate::divergences::{divergence, phi_norm, DivergenceKind, QuadratureSpec};
use crate::error::{domain, Result};
use crate::hermite::a_kappa;
use crate::mixtures::MixingMeasure;
use crate::special::golden_min;

const E: f64 = core::f64::consts::E;
const GRID: usize = 512;
const POLISH: usize = 80;

/// `α(t) = (2+δ) / ln(ln(1/t) ∨ e)`.
pub fn alpha(t: f64, delta: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(domain("t", t));
    }
    if !(delta > 0.0) {
        return Err(domain("delta", delta));
    }
    Ok((2.0 + delta) / log(log(1.0 / t).max(E)))
}

/// Minimizes `f` over `(lo, hi)` by a log-spaced grid in the distance to `lo`,
/// then golden-section inside the bracket around the best grid point.
/// Ties go to the smallest argument.
fn grid_then_golden<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> (f64, f64) {
    let width = hi - lo;
    let at = |i: usize| lo + width * exp(log(1e-6) * (1.0 - i as f64 / (GRID - 1) as f64)) * (1.0 - 1e-9);
    let mut best = (at(0), f(at(0)));
    let mut best_i = 0;
    for i in 1..GRID {
        let x = at(i);
        let v = f(x);
        if v < best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    let a = if best_i == 0 { lo + (best.0 - lo) * 0.5 } else { at(best_i - 1) };
    let b = if best_i + 1 == GRID { best.0 + (hi - best.0) * 0.5 } else { at(best_i + 1) };
    let (x, v) = golden_min(&mut f, a, b, POLISH);
    if v < best.1 {
        (x, v)
    } else {
        best
    }
}

fn a1_objective(kappa1: f64, kappa: f64) -> f64 {
    let Ok(a) = a_kappa(kappa) else { return f64::INFINITY };
    let gap = 2.0 * (kappa1 - kappa);
    let third = log((exp(8.0 * log(3.0) + 1.0 + 2.0 * kappa) / gap).max(E)) / gap;
    1.0f64.max(0.5 * a).max(third)
}

/// `A₁(κ₁)`: the infimum over `1 < κ < κ₁` of `1 ∨ A(κ)/2 ∨ ln(3⁸e^{1+2κ}/(2(κ₁−κ)) ∨ e)/(2(κ₁−κ))`.
pub fn a1_constant(kappa1: f64) -> Result<f64> {
    if !(kappa1 > 1.0) || !kappa1.is_finite() {
        return Err(domain("kappa1", kappa1));
    }
    Ok(grid_then_golden(|k| a1_objective(kappa1, k), 1.0, kappa1).1)
}

/// `B₀ = (1 ∨ 2eM²d) e^{2κ₁}`.
pub fn b0_constant(kappa1: f64, m: f64, d: usize) -> f64 {
    (1.0f64).max(2.0 * E * m * m * d as f64) * exp(2.0 * kappa1)
}

/// `w₀ = 1 ∨ (2/(κ₂−1)) ln(B₀/(κ₂−1) ∨ e)`.
fn w0(kappa2: f64, b0: f64) -> f64 {
    1.0f64.max(2.0 / (kappa2 - 1.0) * log((b0 / (kappa2 - 1.0)).max(E)))
}

/// `B = ⌊2B₀ e^{w₀}⌋`; infinite when it overflows.
pub fn b_constant(kappa2: f64, b0: f64) -> f64 {
    floor(2.0 * b0 * exp(w0(kappa2, b0)))
}

/// Smallest `n₀` from the Lambert-W bound, saturating at `u64::MAX`.
pub fn lambert_n0(kappa2: f64, b0: f64, t: f64) -> Result<u64> {
    if !(kappa2 > 1.0) {
        return Err(domain("kappa2", kappa2));
    }
    if !(b0 >= 1.0) {
        return Err(domain("B0", b0));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(domain("t", t));
    }
    let first = 2.0 * b0 * exp(w0(kappa2, b0));
    let lt = log(1.0 / t);
    let second = 2.0 * kappa2 * lt / log(lt.max(E));
    Ok(floor(first.max(second)) as u64)
}

/// `ln[(2B₀/(n+1))^{(n+1)/2}]`, the left side of the Lambert-W guarantee.
pub fn lambert_lhs_ln(b0: f64, n: u64) -> f64 {
    let m = n as f64 + 1.0;
    0.5 * m * log(2.0 * b0 / m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundConstants {
    pub delta: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub a1: f64,
    pub b0: f64,
    pub b: f64,
    pub log_c0: f64,
    pub m: f64,
    pub d: usize,
}

impl BoundConstants {
    /// Constants at one point `κ₁` of the constraint curve `2κ₁κ₂ = 2+δ`.
    pub fn at(delta: f64, kappa1: f64, m: f64, d: usize) -> Result<Self> {
        let kappa2 = (2.0 + delta) / (2.0 * kappa1);
        if !(kappa1 > 1.0 && kappa2 > 1.0) {
            return Err(domain("kappa1", kappa1));
        }
        let a1 = a1_constant(kappa1)?;
        let b0 = b0_constant(kappa1, m, d);
        let b = b_constant(kappa2, b0);
        let log_c0 = kappa1 * (a1 * d as f64).max(b);
        Ok(Self { delta, kappa1, kappa2, a1, b0, b, log_c0, m, d })
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        alpha(t, self.delta)
    }
}

/// `log C₀(δ, M, d)`: the infimum of `κ₁(A₁d ∨ B)` over the constraint curve.
pub fn compute_c0(delta: f64, m: f64, d: usize) -> Result<BoundConstants> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(domain("delta", delta));
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(domain("M", m));
    }
    if d == 0 {
        return Err(domain("d", 0.0));
    }
    let kmax = 0.5 * (2.0 + delta);
    let objective = |k1: f64| BoundConstants::at(delta, k1, m, d).map(|c| c.log_c0).unwrap_or(f64::INFINITY);
    let (k1, _) = grid_then_golden(objective, 1.0, kmax);
    BoundConstants::at(delta, k1, m, d)
}

/// `ln 𝒥(t) = ln(C₀t ∨ t^{1−α(t)})`.
pub fn ln_j_transfer(t: f64, bc: &BoundConstants) -> Result<f64> {
    let a = bc.alpha(t)?;
    let lt = log(t);
    Ok((bc.log_c0 + lt).max((1.0 - a) * lt))
}

/// `𝒥(t) = C₀t ∨ t^{1−α(t)}`; `+∞` when `C₀t` overflows.
pub fn j_transfer(t: f64, bc: &BoundConstants) -> Result<f64> {
    Ok(exp(ln_j_transfer(t, bc)?))
}

/// One side-by-side comparison `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InequalityCheck {
    pub lhs: f64,
    /// May be `+∞` when `C₀` dominates; `ln_rhs` stays finite.
    pub rhs: f64,
    pub ln_rhs: f64,
    pub margin: f64,
    /// Ten times the combined quadrature error of both sides.
    pub tolerance: f64,
    pub violated: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, lhs_err: f64, ln_factor: f64, tv: f64, tv_err: f64, alpha: f64) -> Self {
        let ln_rhs = ln_factor + log(tv);
        let rhs = exp(ln_rhs);
        // d/dt of t^{1−α(t)} is at most (1+α) t^{−α}; same factor bounds C₀
        let rhs_err = (1.0 + alpha) * exp(ln_factor) * tv_err;
        let tolerance = 10.0 * (lhs_err + rhs_err);
        let margin = rhs - lhs;
        Self { lhs, rhs, ln_rhs, margin, tolerance, violated: margin < -tolerance }
    }

    fn trivial() -> Self {
        Self { lhs: 0.0, rhs: 0.0, ln_rhs: f64::NEG_INFINITY, margin: 0.0, tolerance: 0.0, violated: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MainTheoremReport {
    pub tv: f64,
    pub h: f64,
    pub chi2: f64,
    pub g_l2: f64,
    /// `√χ² ≤ (C₀ ∨ TV^{−α}) TV` with `C₀(δ, M, d)`.
    pub chi: InequalityCheck,
    /// `‖g‖_{L²(φ_d)} ≤ (C₀ ∨ TV^{−α}) TV` with the cube read as `[−2(M/2), 2(M/2)]^d`.
    pub norm: InequalityCheck,
    /// `H ≤ (C₀ ∨ TV^{−α}) TV`.
    pub hellinger: InequalityCheck,
    pub log_c0: f64,
    pub log_c0_half: f64,
}

impl MainTheoremReport {
    pub fn violated(&self) -> bool {
        self.chi.violated || self.norm.violated || self.hellinger.violated
    }
}

/// Constants for both readings of the support cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremConstants {
    pub full: BoundConstants,
    pub half: BoundConstants,
}

impl TheoremConstants {
    pub fn new(delta: f64, m: f64, d: usize) -> Result<Self> {
        Ok(Self { full: compute_c0(delta, m, d)?, half: compute_c0(delta, 0.5 * m, d)? })
    }
}

/// Evaluates all three inequalities for one pair, given precomputed constants.
pub fn verify_main_theorem_with(
    pi: &MixingMeasure,
    eta: &MixingMeasure,
    constants: &TheoremConstants,
    quad: &QuadratureSpec,
) -> Result<MainTheoremReport> {
    let tv = divergence(DivergenceKind::Tv, pi, eta, quad)?;
    let h = divergence(DivergenceKind::H, pi, eta, quad)?;
    let chi2 = divergence(DivergenceKind::Chi2, pi, eta, quad)?;
    let g2 = phi_norm(pi, eta, 2, quad)?;
    let chi = sqrt(chi2.value);
    let chi_err = if chi > 0.0 { chi2.error_bound / (2.0 * chi) } else { sqrt(chi2.error_bound) };
    let (log_c0, log_c0_half) = (constants.full.log_c0, constants.half.log_c0);
    let base = MainTheoremReport {
        tv: tv.value,
        h: h.value,
        chi2: chi2.value,
        g_l2: g2.value,
        chi: InequalityCheck::trivial(),
        norm: InequalityCheck::trivial(),
        hellinger: InequalityCheck::trivial(),
        log_c0,
        log_c0_half,
    };
    if !(tv.value > 0.0) {
        // TV = 0 forces π = η as mixtures; everything else must vanish too
        let tol = 10.0 * (chi_err + g2.error_bound + h.error_bound);
        let zero = |v: f64| InequalityCheck { lhs: v, margin: -v, tolerance: tol, violated: v > tol, ..InequalityCheck::trivial() };
        return Ok(MainTheoremReport { chi: zero(chi), norm: zero(g2.value), hellinger: zero(h.value), ..base });
    }
    let t = tv.value.min(1.0 - 1e-16);
    let a = alpha(t, constants.full.delta)?;
    let ln_power = -a * log(t);
    let ln_full = log_c0.max(ln_power);
    let ln_half = log_c0_half.max(ln_power);
    Ok(MainTheoremReport {
        chi: InequalityCheck::new(chi, chi_err, ln_full, t, tv.error_bound, a),
        norm: InequalityCheck::new(g2.value, g2.error_bound, ln_half, t, tv.error_bound, a),
        hellinger: InequalityCheck::new(h.value, h.error_bound, ln_full, t, tv.error_bound, a),
        ..base
    })
}

/// [`verify_main_theorem_with`] using `M` = the larger of the two radii.
pub fn verify_main_theorem(pi: &MixingMeasure, eta: &MixingMeasure, delta: f64, quad: &QuadratureSpec) -> Result<MainTheoremReport> {
    let m = pi.radius().max(eta.radius());
    let constants = TheoremConstants::new(delta, m, pi.dim())?;
    verify_main_theorem_with(pi, eta, &constants, quad)
}

/// Outcome of a subadditivity scan of `𝒥` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SubadditivityReport {
    pub checked: usize,
    /// `(s, t, ln 𝒥(s+t) − ln(𝒥(s)+𝒥(t)))` for every failing pair.
    pub violations: Vec<(f64, f64, f64)>,
}

/// Log-spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (log(lo), log(hi));
    (0..count).map(|i| exp(a + (b - a) * i as f64 / (count.max(2) - 1) as f64)).collect()
}

fn ln_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + log(exp(a - m) + exp(b - m))
    }
}

/// Checks `𝒥(s+t) ≤ 𝒥(s) + 𝒥(t)` for `s, t` on `grid` with `s + t < 1`.
pub fn subadditivity_scan(bc: &BoundConstants, grid: &[f64]) -> Result<SubadditivityReport> {
    let mut report = SubadditivityReport { checked: 0, violations: Vec::new() };
    for (i, &s) in grid.iter().enumerate() {
        for &t in &grid[i..] {
            if s + t >= 1.0 {
                continue;
            }
            report.checked += 1;
            let whole = ln_j_transfer(s + t, bc)?;
            let excess = whole - ln_add(ln_j_transfer(s, bc)?, ln_j_transfer(t, bc)?);
            // ln 𝒥 carries ln C₀, which can be huge; compare in units of its last place
            if excess > 1e-12 + 8.0 * f64::EPSILON * whole.abs() {
                report.violations.push((s, t, excess));
            }
        }
    }
    Ok(report)
}

/// Largest `ln C₀` on the scan `ln_c0s` (taken in decreasing order) at which
/// subadditivity fails on `grid`, or `None` when it never fails.
pub fn subadditivity_threshold(delta: f64, ln_c0s: &[f64], grid: &[f64]) -> Result<Option<f64>> {
    let mut sorted = ln_c0s.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for lc in sorted {
        let bc = BoundConstants { delta, kappa1: f64::NAN, kappa2: f64::NAN, a1: f64::NAN, b0: f64::NAN, b: f64::NAN, log_c0: lc, m: f64::NAN, d: 0 };
        if !subadditivity_scan(&bc, grid)?.violations.is_empty() {
            return Ok(Some(lc));
        }
    }
    Ok(None)
}

/// Random mixing measure with `atoms` atoms uniform on `[−M, M]^d` and Dirichlet(1) weights.
pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, d: usize, m: f64, atoms: usize) -> Result<MixingMeasure> {
    let mut coords = Vec::with_capacity(atoms * d);
    for _ in 0..atoms * d {
        coords.push(rng.random_range(-m..=m));
    }
    let raw: Vec<f64> = (0..atoms).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // absorb rounding so the weights sum to one
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[0] += drift;
    MixingMeasure::new(d, m, coords, weights)
}

/// Dimension, radius and the two measures of a seeded test pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomPair {
    pub id: usize,
    pub d: usize,
    pub m: f64,
    pub pi: MixingMeasure,
    pub eta: MixingMeasure,
}

const PAIR_RADII: [f64; 3] = [0.5, 1.0, 2.0];

/// Pair number `id` of the seeded suite: `d ∈ {1, 2}`, `M ∈ {0.5, 1, 2}`,
/// one to four atoms. Every third pair perturbs `π` slightly to probe small TV.
pub fn random_pair(seed: u64, id: usize) -> Result<RandomPair> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    let d = 1 + id % 2;
    let m = PAIR_RADII[(id / 2) % 3];
    let k_pi = rng.random_range(1..=4usize);
    let pi = random_measure(&mut rng, d, m, k_pi)?;
    let eta = if id % 3 == 2 {
        let scale = exp(rng.random_range(log(1e-3)..log(0.2)));
        let coords: Vec<f64> = pi
            .atoms_flat()
            .iter()
            .map(|a| (a + scale * m * rng.random_range(-1.0..=1.0)).clamp(-m, m))
            .collect();
        MixingMeasure::new(d, m, coords, pi.weights().to_vec())?
    } else {
        let k_eta = rng.random_range(1..=4usize);
        random_measure(&mut rng, d, m, k_eta)?
    };
    Ok(RandomPair { id, d, m, pi, eta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_examples() {
        assert!((alpha(exp(-E), 1.0).unwrap() - 3.0).abs() < 1e-12);
        assert!((alpha(exp(-E * E), 0.5).unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(alpha(0.5, 1.0).unwrap(), 3.0);
        assert!(alpha(1.0, 1.0).is_err());
        assert!(alpha(0.1, 0.0).is_err());
    }

    #[test]
    fn a1_examples() {
        let a2 = a1_constant(2.0).unwrap();
        assert!(a2 >= 1.0 && a2.is_finite());
        assert!(a1_constant(3.0).unwrap() <= a1_constant(1.5).unwrap());
        assert!(a1_constant(1.0).is_err());
    }

    #[test]
    fn lambert_guarantee_and_branches() {
        let n0 = lambert_n0(2.0, 1.0, 1e-6).unwrap();
        assert!(lambert_lhs_ln(1.0, n0) <= log(1e-6));
        let t = 0.9;
        let first = floor(2.0 * exp(w0(2.0, 1.0)));
        assert_eq!(lambert_n0(2.0, 1.0, t).unwrap(), first as u64);
    }

    #[test]
    fn c0_examples() {
        let c = compute_c0(2.0, 1.0, 1).unwrap();
        assert!(c.log_c0 > 0.0 && c.log_c0.is_finite());
        assert!((2.0 * c.kappa1 * c.kappa2 - 4.0).abs() < 1e-12);
        assert!(c.kappa1 > 1.0 && c.kappa2 > 1.0);
        assert!(compute_c0(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn transfer_branches() {
        let bc = compute_c0(1.0, 1.0, 1).unwrap();
        let t = 1e-300;
        let a = bc.alpha(t).unwrap();
        assert!((ln_j_transfer(t, &bc).unwrap() - (1.0 - a) * log(t)).abs() < 1e-9 || bc.log_c0 + log(t) > (1.0 - a) * log(t));
        let small = BoundConstants { log_c0: 50.0, ..bc };
        assert!((ln_j_transfer(0.3, &small).unwrap() - (50.0 + log(0.3))).abs() < 1e-12);
    }

    #[test]
    fn identical_pair_is_trivially_fine() {
        let p = MixingMeasure::new(1, 1.0, alloc::vec![0.2, -0.4], alloc::vec![0.5, 0.5]).unwrap();
        let r = verify_main_theorem(&p, &p, 1.0, &QuadratureSpec::default()).unwrap();
        assert!(!r.violated());
        assert_eq!(r.tv, 0.0);
    }

    #[test]
    fn random_pairs_are_reproducible() {
        let a = random_pair(7, 5).unwrap();
        let b = random_pair(7, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.d, 2);
    }
}
