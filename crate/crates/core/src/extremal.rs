//! The extremal ratio `c_{n,d} = inf ‖P‖_{L¹(φ_d)}` over polynomials of
//! degree `≤ n` with `‖P‖_{L²(φ_d)} = 1`, together with the Nikolskii and
//! restricted-range inequalities behind its lower bound.
//!
//! Polynomials are stored by their coefficients in the orthonormal Hermite
//! basis, so the L² constraint is the unit sphere. The optimizer only ever
//! produces upper bounds on `c_{n,d}`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, lgamma, log, pow, sqrt};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::divergences::{phi_weighted_abs, QuadratureSpec};
use crate::error::{domain, Error, Result};
use crate::hermite::{
    a_kappa, c_nd, cd_kernel_diag, energy, hermite_eval, index_count, kernel_tail_bound, ln_c_nd, multi_indices,
    series_l1, series_l1_with_gradient, MultiIndex,
};
use crate::quad::{self, Tolerance};
use crate::special::{ln_double_factorial, ln_factorial, normal_pdf};

/// Largest number of Hermite coefficients the optimizer accepts.
pub const COEFF_CAP: u128 = 200;
pub const DEFAULT_RESTARTS: usize = 64;

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// A polynomial of total degree `≤ n` in the orthonormal Hermite basis.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolyInBasis {
    pub d: usize,
    pub n: u32,
    pub indices: Vec<MultiIndex>,
    pub coeffs: Vec<f64>,
}

impl PolyInBasis {
    pub fn new(d: usize, n: u32, coeffs: Vec<f64>) -> Result<Self> {
        let indices = multi_indices(n, d, COEFF_CAP.max(index_count(n, d)))?;
        if indices.len() != coeffs.len() {
            return Err(Error::DimensionMismatch { left: indices.len(), right: coeffs.len() });
        }
        Ok(Self { d, n, indices, coeffs })
    }

    /// Uniformly random point of the unit sphere in coefficient space.
    pub fn random_unit(d: usize, n: u32, rng: &mut ChaCha20Rng) -> Result<Self> {
        let len = index_count(n, d) as usize;
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        normalize(&mut v);
        Self::new(d, n, v)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(&self.coeffs).map(|(k, c)| c * hermite_eval(k, x).unwrap_or(0.0)).sum()
    }

    /// `‖P‖_{L²(φ_d)}`, exact by orthonormality.
    pub fn l2_norm(&self) -> f64 {
        sqrt(self.coeffs.iter().map(|c| c * c).sum())
    }
}

fn normalize(v: &mut [f64]) {
    let s = sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coefficients of `x^m` in the normalized Hermite basis, padded to length `len`.
pub fn monomial_coeffs(m: u32, len: usize) -> Vec<f64> {
    let mut c = vec![0.0; len.max(m as usize + 1)];
    // x^m = Σ_j m!/(j! 2^j (m−2j)!) He_{m−2j}, and He_k = √k! h_k
    for j in 0..=m / 2 {
        let k = m - 2 * j;
        let ln = ln_factorial(m) - ln_factorial(j) - j as f64 * core::f64::consts::LN_2 - ln_factorial(k) + 0.5 * ln_factorial(k);
        c[k as usize] = exp(ln);
    }
    c
}

/// `‖x^n‖_{L¹(φ)} / ‖x^n‖_{L²(φ)} = 2^{n/2} Γ((n+1)/2) / (√π √((2n−1)!!))`.
pub fn monomial_ratio_closed(n: u32) -> f64 {
    let nf = n as f64;
    let ln_l1 = 0.5 * nf * core::f64::consts::LN_2 + lgamma(0.5 * (nf + 1.0)) - log(SQRT_PI);
    exp(ln_l1 - 0.5 * ln_double_factorial(2 * n as i64 - 1))
}

/// The monomial ratio computed from the Hermite expansion of `x^n`.
pub fn monomial_ratio(n: u32) -> f64 {
    let c = monomial_coeffs(n, n as usize + 1);
    series_l1(&c) / sqrt(dot(&c, &c))
}

/// `½ C_{n,d}^{−1/2} e^{−κE/2}` at the smallest `κ` with `A(κ) ≤ E/d`, or `None`
/// when no `κ` up to 1e6 satisfies the energy condition.
pub fn cn_lower_bound(n: u32, d: usize) -> Option<f64> {
    let ratio = energy(n, d) / d as f64;
    let feasible = |k: f64| a_kappa(k).map(|a| a <= ratio).unwrap_or(false);
    // A(κ) decreases in κ; scan a log grid for the first feasible point, then bisect
    let grid: Vec<f64> = (0..512).map(|i| 1.0 + exp(log(1e-8) + (log(1e6) - log(1e-8)) * i as f64 / 511.0)).collect();
    let first = grid.iter().position(|&k| feasible(k))?;
    let mut hi = grid[first];
    let mut lo = if first == 0 { 1.0 } else { grid[first - 1] };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * exp(-0.5 * ln_c_nd(n, d) - 0.5 * hi * energy(n, d)))
}

/// Outcome of [`estimate_cn`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CnEstimate {
    pub n: u32,
    pub d: usize,
    /// Smallest `‖P‖_{L¹(φ_d)}` found over unit-norm `P`; an upper bound on `c_{n,d}`.
    pub estimate: f64,
    pub lower_bound: Option<f64>,
    pub monomial_ratio: f64,
    pub best: PolyInBasis,
    pub restarts: usize,
}

/// Projected descent on the unit sphere from `start`, with Armijo backtracking.
fn sphere_descent<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(mut objective: F, mut x: Vec<f64>, max_iter: usize) -> (f64, Vec<f64>) {
    normalize(&mut x);
    let (mut fx, mut g) = objective(&x);
    let mut step = 0.25;
    for _ in 0..max_iter {
        let radial = dot(&g, &x);
        let r: Vec<f64> = g.iter().zip(&x).map(|(gi, xi)| gi - radial * xi).collect();
        let rn2 = dot(&r, &r);
        if rn2 < 1e-24 {
            break;
        }
        let mut accepted = false;
        while step > 1e-14 {
            let mut y: Vec<f64> = x.iter().zip(&r).map(|(xi, ri)| xi - step * ri).collect();
            normalize(&mut y);
            let (fy, gy) = objective(&y);
            if fy <= fx - 1e-4 * step * rn2 {
                x = y;
                let gain = fx - fy;
                fx = fy;
                g = gy;
                accepted = true;
                step *= 1.5;
                if gain < 1e-15 * fx {
                    return (fx, x);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (fx, x)
}

/// Best unit-norm polynomial for `d = 1`, optimizing each parity separately.
fn optimize_1d(n: u32, restarts: usize, seed: u64) -> (f64, Vec<f64>) {
    let len = n as usize + 1;
    let mut best = (f64::INFINITY, vec![0.0; len]);
    for parity in 0..2u32 {
        if parity > n {
            continue;
        }
        let slots: Vec<usize> = (parity as usize..len).step_by(2).collect();
        let top = *slots.last().unwrap_or(&0) as u32;
        let lift = |v: &[f64]| -> Vec<f64> {
            let mut full = vec![0.0; len];
            for (s, c) in slots.iter().zip(v) {
                full[*s] = *c;
            }
            full
        };
        let objective = |v: &[f64]| -> (f64, Vec<f64>) {
            let (val, grad) = series_l1_with_gradient(&lift(v));
            (val, slots.iter().map(|&s| grad[s]).collect())
        };
        for r in 0..restarts.max(1) {
            let start: Vec<f64> = if r == 0 {
                let mono = monomial_coeffs(top, len);
                slots.iter().map(|&s| mono[s]).collect()
            } else {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(((parity as u64) << 32) | r as u64);
                (0..slots.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            let (val, v) = sphere_descent(objective, start, 400);
            // strict comparison keeps the earliest restart on ties
            if val < best.0 {
                best = (val, lift(&v));
            }
        }
    }
    best
}

/// Tensor Gauss–Hermite table `(weights, rows of h_k at each node)` for `d ≥ 2`.
fn gh_table(indices: &[MultiIndex], d: usize, m: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (x, w) = quad::gauss_hermite(m);
    let total = pow(m as f64, d as f64) as usize;
    let mut weights = Vec::with_capacity(total);
    let mut rows = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    for _ in 0..total {
        let mut wt = 1.0;
        for i in 0..d {
            point[i] = x[idx[i]];
            wt *= w[idx[i]];
        }
        weights.push(wt);
        rows.push(indices.iter().map(|k| hermite_eval(k, &point).unwrap_or(0.0)).collect());
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < m {
                break;
            }
            *slot = 0;
        }
    }
    (weights, rows)
}

fn optimize_nd(n: u32, d: usize, restarts: usize, seed: u64, quad_spec: &QuadratureSpec) -> Result<(f64, Vec<f64>)> {
    let indices = multi_indices(n, d, COEFF_CAP)?;
    let len = indices.len();
    let m = ((3 * n as usize + 20).min(pow(40_000.0, 1.0 / d as f64) as usize)).max(4);
    let (weights, rows) = gh_table(&indices, d, m);
    let objective = |v: &[f64]| -> (f64, Vec<f64>) {
        let mut val = 0.0;
        let mut grad = vec![0.0; len];
        for (wt, row) in weights.iter().zip(&rows) {
            let p = dot(row, v);
            val += wt * p.abs();
            let s = wt * p.signum();
            for (g, h) in grad.iter_mut().zip(row) {
                *g += s * h;
            }
        }
        (val, grad)
    };
    let mono = monomial_coeffs(n, n as usize + 1);
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    for r in 0..restarts.max(1) {
        let start: Vec<f64> = if r == 0 {
            // x₁^n: only indices of the form (k, 0, …, 0) carry weight
            indices
                .iter()
                .map(|k| if k.entries()[1..].iter().all(|&e| e == 0) { mono[k.entries()[0] as usize] } else { 0.0 })
                .collect()
        } else {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
        };
        candidates.push(sphere_descent(objective, start, 300).1);
    }
    // rescore with the accurate integrator; ties keep the earliest restart
    let mut best = (f64::INFINITY, vec![0.0; len]);
    for v in candidates {
        let poly = PolyInBasis { d, n, indices: indices.clone(), coeffs: v };
        let val = phi_weighted_abs(d, |x| poly.eval(x), quad_spec)?.value;
        if val < best.0 {
            best = (val, poly.coeffs);
        }
    }
    Ok(best)
}

/// Estimates `c_{n,d}` by random-restart descent, and reports the analytic
/// lower bound and the monomial ratio next to it.
pub fn estimate_cn(n: u32, d: usize, restarts: usize, seed: u64) -> Result<CnEstimate> {
    if d == 0 {
        return Err(domain("d", 0.0));
    }
    let count = index_count(n, d);
    if count > COEFF_CAP {
        return Err(Error::EnumerationCap { count, cap: COEFF_CAP });
    }
    let (estimate, coeffs) = if d == 1 {
        optimize_1d(n, restarts, seed)
    } else {
        optimize_nd(n, d, restarts, seed, &QuadratureSpec::default().with_tol(1e-10, 1e-8))?
    };
    Ok(CnEstimate {
        n,
        d,
        estimate,
        lower_bound: cn_lower_bound(n, d),
        monomial_ratio: monomial_ratio(n),
        best: PolyInBasis::new(d, n, coeffs)?,
        restarts,
    })
}

/// `3e^{−κ₁n}` when `n ≥ A₁(κ₁)d`, the range where `c_{n,d} ≥ 3e^{−κ₁n}` is guaranteed.
pub fn cn_floor(n: u32, d: usize, kappa1: f64) -> Result<Option<f64>> {
    let a1 = crate::bounds::a1_constant(kappa1)?;
    Ok(if n as f64 >= a1 * d as f64 { Some(3.0 * exp(-kappa1 * n as f64)) } else { None })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NikolskiiCheck {
    pub sup_lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Grid supremum of `|P φ_d^{1/2}|` against `(2π)^{−d/4} C_{n,d}^{1/2} ‖P‖₂`.
///
/// The grid has `per_axis` points per coordinate on `[−√(6E), √(6E)]`.
pub fn nikolskii_check(p: &PolyInBasis, per_axis: usize) -> Result<NikolskiiCheck> {
    if per_axis < 2 {
        return Err(domain("per_axis", per_axis as f64));
    }
    let d = p.d;
    let half = sqrt(6.0 * energy(p.n, d));
    let total = pow(per_axis as f64, d as f64);
    if total > 4e6 {
        return Err(Error::Unsupported(String::from("Nikolskii grid too large")));
    }
    let axis: Vec<f64> = (0..per_axis).map(|i| -half + 2.0 * half * i as f64 / (per_axis - 1) as f64).collect();
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut sup = 0.0f64;
    for _ in 0..total as usize {
        for i in 0..d {
            point[i] = axis[idx[i]];
        }
        let w: f64 = point.iter().map(|x| sqrt(normal_pdf(*x))).product();
        sup = sup.max((p.eval(&point) * w).abs());
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < per_axis {
                break;
            }
            *slot = 0;
        }
    }
    let rhs = pow(2.0 * core::f64::consts::PI, -0.25 * d as f64) * sqrt(c_nd(p.n, d)) * p.l2_norm();
    Ok(NikolskiiCheck { sup_lhs: sup, rhs, ok: sup <= rhs + 1e-12 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RestrictedCheck {
    /// `∫_{‖x‖ > √(2κE)} K_n(x,x) φ_d(x) dx`.
    pub trace: f64,
    pub bound: f64,
    /// Whether `E ≥ A(κ)d`, under which the trace must also be at most ½.
    pub energy_condition: bool,
    pub two_sided_ok: bool,
}

/// Surface area of the unit sphere in `R^d`.
fn sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    2.0 * exp(h * log(core::f64::consts::PI) - lgamma(h))
}

/// Tail trace of the Christoffel–Darboux kernel outside the ball of radius `√(2κE)`.
///
/// `K_n(x,x) φ_d(x)` is rotation invariant (the polynomial space and the
/// weight both are), so the integral reduces to one radial dimension.
pub fn kernel_tail_trace(n: u32, d: usize, kappa: f64, tol: Tolerance) -> Result<(f64, f64)> {
    if !(kappa > 1.0) {
        return Err(domain("kappa", kappa));
    }
    let r0 = sqrt(2.0 * kappa * energy(n, d));
    let area = sphere_area(d);
    let mut x = vec![0.0; d];
    let mut failure = None;
    let mut radial = |rho: f64| -> f64 {
        x[0] = rho;
        match cd_kernel_diag(n, &x) {
            Ok(k) => k * normal_pdf(rho) * pow(crate::special::INV_SQRT_2PI, d as f64 - 1.0) * area * pow(rho, d as f64 - 1.0),
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    };
    // the integrand is below e^{−ρ²/2}·poly(ρ); forty units past the start is far beyond double range
    let hi = r0 + 40.0;
    let breaks: Vec<f64> = (0..=40).map(|i| r0 + (hi - r0) * i as f64 / 40.0).collect();
    let res = quad::integrate(&mut radial, &breaks, tol);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((res.value, res.error))
}

pub fn restricted_range_check(n: u32, d: usize, kappa: f64, tol: Tolerance) -> Result<RestrictedCheck> {
    let (trace, err) = kernel_tail_trace(n, d, kappa, tol)?;
    let bound = kernel_tail_bound(n, d, kappa)?;
    let energy_condition = energy(n, d) >= a_kappa(kappa)? * d as f64;
    let mut ok = trace - err <= bound;
    if energy_condition {
        ok &= trace - err <= 0.5;
    }
    Ok(RestrictedCheck { trace, bound, energy_condition, two_sided_ok: ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_sf;

    #[test]
    fn monomial_expansion_has_right_norm() {
        for m in 0..15u32 {
            let c = monomial_coeffs(m, m as usize + 1);
            let n2 = dot(&c, &c);
            let want = libm::exp(ln_double_factorial(2 * m as i64 - 1));
            assert!((n2 - want).abs() < 1e-12 * want, "{m}");
        }
    }

    #[test]
    fn monomial_ratio_matches_gamma_form() {
        for n in 0..=12 {
            let a = monomial_ratio(n);
            let b = monomial_ratio_closed(n);
            assert!((a - b).abs() < 1e-12, "{n}: {a} {b}");
        }
        assert!((monomial_ratio_closed(1) - sqrt(2.0 / core::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn small_degree_estimates() {
        let e0 = estimate_cn(0, 1, 4, 1).unwrap();
        assert!((e0.estimate - 1.0).abs() < 1e-14);
        let e1 = estimate_cn(1, 1, 8, 1).unwrap();
        assert!(e1.estimate <= sqrt(2.0 / core::f64::consts::PI) + 1e-12);
    }

    #[test]
    fn sandwich_for_moderate_degree() {
        let e = estimate_cn(6, 1, 16, 3).unwrap();
        assert!(e.estimate <= e.monomial_ratio + 1e-12);
        assert!(e.estimate <= 1.0);
        if let Some(lb) = e.lower_bound {
            assert!(lb <= e.estimate);
        }
        assert!((e.best.l2_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_estimate_is_sane() {
        let e = estimate_cn(3, 2, 4, 9).unwrap();
        assert!(e.estimate <= e.monomial_ratio + 1e-6);
        assert!(e.estimate > 0.0);
    }

    #[test]
    fn nikolskii_equality_for_constant() {
        let p = PolyInBasis::new(2, 0, vec![1.0]).unwrap();
        let r = nikolskii_check(&p, 41).unwrap();
        assert!((r.sup_lhs - r.rhs).abs() < 1e-15);
        assert!(r.ok);
    }

    #[test]
    fn restricted_range_examples() {
        let r = restricted_range_check(0, 1, 2.0, Tolerance::default()).unwrap();
        assert!((r.trace - 2.0 * normal_sf(2.0)).abs() < 1e-13);
        let a = kernel_tail_trace(8, 1, 2.0, Tolerance::default()).unwrap().0;
        let b = kernel_tail_trace(8, 1, 3.0, Tolerance::default()).unwrap().0;
        assert!(b < a);
        assert!(restricted_range_check(8, 1, 2.0, Tolerance::default()).unwrap().two_sided_ok);
    }

    #[test]
    fn kernel_is_rotation_invariant() {
        let a = cd_kernel_diag(5, &[1.3, 0.0]).unwrap();
        let s = 1.3 / core::f64::consts::SQRT_2;
        let b = cd_kernel_diag(5, &[s, s]).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }
}
