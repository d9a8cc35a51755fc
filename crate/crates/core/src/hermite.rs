//! Normalized Hermite polynomials and the kernels built from them.
//!
//! `h_k` is orthonormal in `L²(φ)`: `h_0 = 1`, `h_1 = x` and
//! `√(k+1)·h_{k+1} = x·h_k − √k·h_{k−1}`. Multivariate polynomials are
//! tensor products indexed by [`MultiIndex`].

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{exp, log, sqrt};

use crate::error::{domain, Error, Result};
use crate::special::{binomial, normal_pdf, INV_SQRT_2PI};

/// Default limit on the number of enumerated multi-indices.
pub const DEFAULT_INDEX_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MultiIndex(pub(crate) Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Unsupported("a multi-index needs at least one entry".into()));
        }
        Ok(Self(entries))
    }

    pub fn zero(d: usize) -> Self {
        Self(vec![0; d.max(1)])
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `ln 𝐤! = Σ ln k_j!`.
    pub fn ln_factorial(&self) -> f64 {
        self.0.iter().map(|&k| crate::special::ln_factorial(k)).sum()
    }
}

/// `binom(n+d, d)`: the number of multi-indices of total degree at most `n`.
pub fn index_count(n: u32, d: usize) -> u128 {
    binomial(n as u64 + d as u64, d as u64)
}

fn check_cap(n: u32, d: usize, cap: u128) -> Result<()> {
    let count = index_count(n, d);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    Ok(())
}

/// All multi-indices of total degree `≤ n` in graded lexicographic order.
pub fn multi_indices(n: u32, d: usize, cap: u128) -> Result<Vec<MultiIndex>> {
    if d == 0 {
        return Err(domain("d", 0.0));
    }
    check_cap(n, d, cap)?;
    let mut out = Vec::with_capacity(index_count(n, d) as usize);
    let mut cur = vec![0u32; d];
    for degree in 0..=n {
        fill(&mut cur, 0, degree, &mut out);
    }
    Ok(out)
}

fn fill(cur: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.to_vec()));
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k;
        fill(cur, pos + 1, remaining - k, out);
    }
    cur[pos] = 0;
}

/// `[h_0(x), …, h_n(x)]` by the normalized recurrence.
pub fn hermite_table(n: usize, x: f64) -> Vec<f64> {
    let mut h = vec![0.0; n + 1];
    h[0] = 1.0;
    if n >= 1 {
        h[1] = x;
    }
    for k in 1..n {
        let kf = k as f64;
        h[k + 1] = (x * h[k] - sqrt(kf) * h[k - 1]) / sqrt(kf + 1.0);
    }
    h
}

pub fn hermite_1d(k: u32, x: f64) -> f64 {
    hermite_table(k as usize, x)[k as usize]
}

/// `h_𝐤(x) = Π_j h_{k_j}(x_j)`.
pub fn hermite_eval(k: &MultiIndex, x: &[f64]) -> Result<f64> {
    if k.dim() != x.len() {
        return Err(Error::DimensionMismatch { left: k.dim(), right: x.len() });
    }
    Ok(k.0.iter().zip(x).map(|(&kj, &xj)| hermite_1d(kj, xj)).product())
}

/// `Σ_k c_k h_k(x)` for a one-dimensional coefficient vector.
pub fn series_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    let (mut prev, mut cur) = (0.0, 1.0);
    for (k, &c) in coeffs.iter().enumerate() {
        acc += c * cur;
        let kf = k as f64;
        let next = (x * cur - sqrt(kf) * prev) / sqrt(kf + 1.0);
        prev = cur;
        cur = next;
    }
    acc
}

/// Σ over total degree ≤ n of products of per-axis factors `rows[j][k_j]`.
///
/// This is the separable form of every kernel sum in this module; it visits
/// the same index set as [`multi_indices`] without materializing it.
fn graded_product_sum(rows: &[Vec<f64>], n: usize) -> f64 {
    // acc[m] = sum over indices of the first j axes with total degree m
    let mut acc = vec![0.0; n + 1];
    acc[0] = 1.0;
    for row in rows {
        let mut next = vec![0.0; n + 1];
        for (m, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (k, &r) in row.iter().enumerate().take(n + 1 - m) {
                next[m + k] += a * r;
            }
        }
        acc = next;
    }
    acc.iter().sum()
}

/// Christoffel–Darboux diagonal `K_n(x, x) = Σ_{|𝐤|≤n} h_𝐤(x)²`.
pub fn cd_kernel_diag(n: u32, x: &[f64]) -> Result<f64> {
    cd_kernel_diag_capped(n, x, DEFAULT_INDEX_CAP)
}

pub fn cd_kernel_diag_capped(n: u32, x: &[f64], cap: u128) -> Result<f64> {
    if x.is_empty() {
        return Err(domain("d", 0.0));
    }
    check_cap(n, x.len(), cap)?;
    let rows: Vec<Vec<f64>> =
        x.iter().map(|&xj| hermite_table(n as usize, xj).into_iter().map(|h| h * h).collect()).collect();
    Ok(graded_product_sum(&rows, n as usize))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MehlerMode {
    Closed,
    /// Truncate the eigen-expansion at total degree `n_max`.
    Series { n_max: u32 },
}

/// Mehler kernel `Σ_𝐤 e^{−t E_𝐤} h_𝐤(x) h_𝐤(y) φ_d^{1/2}(x) φ_d^{1/2}(y)`, `E_𝐤 = 2|𝐤| + d`.
pub fn mehler(x: &[f64], y: &[f64], t: f64, mode: MehlerMode) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { left: x.len(), right: y.len() });
    }
    if !(t > 0.0) {
        return Err(domain("t", t));
    }
    let d = x.len() as f64;
    match mode {
        MehlerMode::Closed => {
            let s = libm::sinh(2.0 * t);
            let th = libm::tanh(2.0 * t);
            let sq: f64 = x.iter().chain(y).map(|v| v * v).sum();
            let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            Ok(libm::pow(4.0 * PI * s, -0.5 * d) * exp(-sq / (4.0 * th) + dot / (2.0 * s)))
        }
        MehlerMode::Series { n_max } => {
            let n = n_max as usize;
            let rows: Vec<Vec<f64>> = x
                .iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let ha = hermite_table(n, a);
                    let hb = hermite_table(n, b);
                    let root = sqrt(normal_pdf(a) * normal_pdf(b));
                    (0..=n).map(|k| exp(-t * (2 * k + 1) as f64) * ha[k] * hb[k] * root).collect()
                })
                .collect();
            Ok(graded_product_sum(&rows, n))
        }
    }
}

/// `E_{n,d} = 2n + d`.
pub fn energy(n: u32, d: usize) -> f64 {
    2.0 * n as f64 + d as f64
}

/// `ln C_{n,d} = ½[(n+d)ln(n+d) − n ln n − d ln d]`, with the `n = 0` value `0`.
pub fn ln_c_nd(n: u32, d: usize) -> f64 {
    let nf = n as f64;
    let df = d as f64;
    let xlogx = |v: f64| if v > 0.0 { v * log(v) } else { 0.0 };
    0.5 * (xlogx(nf + df) - xlogx(nf) - xlogx(df))
}

pub fn c_nd(n: u32, d: usize) -> f64 {
    exp(ln_c_nd(n, d))
}

/// `c(κ) = √(κ(κ−1)) − ln(√κ + √(κ−1))`.
pub fn c_kappa(kappa: f64) -> Result<f64> {
    if !(kappa > 1.0) {
        return Err(domain("kappa", kappa));
    }
    Ok(sqrt(kappa * (kappa - 1.0)) - log(sqrt(kappa) + sqrt(kappa - 1.0)))
}

/// `A(κ) = c(κ)⁻¹ ln((e/c(κ))·√(κ/(κ−1)) ∨ e)`.
pub fn a_kappa(kappa: f64) -> Result<f64> {
    let c = c_kappa(kappa)?;
    let inner = core::f64::consts::E / c * sqrt(kappa / (kappa - 1.0));
    Ok(log(inner.max(core::f64::consts::E)) / c)
}

/// Global bound `sup_x K_n(x,x) φ_d(x) ≤ (2π)^{−d/2} C_{n,d}`.
pub fn kernel_sup_bound(n: u32, d: usize) -> f64 {
    libm::pow(2.0 * PI, -0.5 * d as f64) * c_nd(n, d)
}

/// Tail bound on `∫_{‖x‖ > √(2κE)} K_n(x,x) φ_d(x)`.
pub fn kernel_tail_bound(n: u32, d: usize, kappa: f64) -> Result<f64> {
    let c = c_kappa(kappa)?;
    let e = energy(n, d);
    let df = d as f64;
    let base = core::f64::consts::E / (2.0 * df) * sqrt(kappa / (kappa - 1.0)) * e;
    Ok(exp(0.5 * df * log(base) - c * e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralConstants {
    pub n: u32,
    pub d: usize,
    pub energy: f64,
    pub c_nd: f64,
    pub kappa: f64,
    pub c_kappa: f64,
    pub a_kappa: f64,
}

pub fn spectral_constants(n: u32, d: usize, kappa: f64) -> Result<SpectralConstants> {
    if d == 0 {
        return Err(domain("d", 0.0));
    }
    Ok(SpectralConstants {
        n,
        d,
        energy: energy(n, d),
        c_nd: c_nd(n, d),
        kappa,
        c_kappa: c_kappa(kappa)?,
        a_kappa: a_kappa(kappa)?,
    })
}

/// `∫_a^b h_k φ` for `k = 0..=n`, with infinite endpoints allowed.
///
/// Uses `h_k φ = −(h_{k−1} φ)′ / √k` for `k ≥ 1`.
pub fn hermite_segment_integrals(n: usize, a: f64, b: f64) -> Vec<f64> {
    let edge = |x: f64| -> Vec<f64> {
        if x.is_infinite() {
            vec![0.0; n + 1]
        } else {
            let w = normal_pdf(x);
            hermite_table(n, x).into_iter().map(|h| h * w).collect()
        }
    };
    let ea = edge(a);
    let eb = edge(b);
    let mut out = vec![0.0; n + 1];
    out[0] = crate::special::normal_mass(a, b);
    for k in 1..=n {
        out[k] = (ea[k - 1] - eb[k - 1]) / sqrt(k as f64);
    }
    out
}

/// Coefficients of `P′` given those of `P` (`h_k′ = √k h_{k−1}`).
pub fn series_derivative(coeffs: &[f64]) -> Vec<f64> {
    (1..coeffs.len()).map(|k| coeffs[k] * sqrt(k as f64)).collect()
}

/// Real roots of a one-dimensional Hermite series, ascending.
///
/// Roots of `P` are bracketed between consecutive roots of `P′`, recursively
/// down to a linear polynomial; each monotone bracket is refined by bisection.
pub fn series_roots(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut deg = coeffs.len();
    while deg > 0 && coeffs[deg - 1].abs() <= 1e-300_f64.max(scale * 1e-300) {
        deg -= 1;
    }
    if deg <= 1 {
        return Vec::new();
    }
    let p = &coeffs[..deg];
    let crit = series_roots(&series_derivative(p));
    let lead = p[deg - 1];
    let n = deg - 1;
    let sign_at = |x: f64| -> f64 {
        if x == f64::INFINITY {
            lead.signum()
        } else if x == f64::NEG_INFINITY {
            if n % 2 == 0 {
                lead.signum()
            } else {
                -lead.signum()
            }
        } else {
            series_eval(p, x)
        }
    };
    let mut fences = Vec::with_capacity(crit.len() + 2);
    fences.push(f64::NEG_INFINITY);
    fences.extend(crit.iter().copied());
    fences.push(f64::INFINITY);
    let mut roots = Vec::new();
    for w in fences.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let mut flo = sign_at(lo);
        let fhi = sign_at(hi);
        if flo == 0.0 && lo.is_finite() {
            if roots.last() != Some(&lo) {
                roots.push(lo);
            }
            continue;
        }
        if fhi == 0.0 || (flo > 0.0) == (fhi > 0.0) {
            continue;
        }
        // replace infinite ends by finite points carrying the limiting sign
        if lo.is_infinite() {
            let anchor = if hi.is_finite() { hi } else { 0.0 };
            lo = expand(|x| series_eval(p, x), anchor, -1.0, flo);
            flo = series_eval(p, lo);
        }
        if hi.is_infinite() {
            hi = expand(|x| series_eval(p, x), lo.max(0.0), 1.0, fhi);
        }
        roots.push(crate::special::bisect(|x| series_eval(p, x), lo, hi, flo));
    }
    roots
}

/// Walks from `anchor` in `direction` with doubling steps until `f` takes the sign of `target`.
fn expand<F: Fn(f64) -> f64>(f: F, anchor: f64, direction: f64, target: f64) -> f64 {
    let mut step = 1.0;
    loop {
        let x = anchor + direction * step;
        let v = f(x);
        if (v > 0.0 && target > 0.0) || (v < 0.0 && target < 0.0) || step > 1e8 {
            return x;
        }
        step *= 2.0;
    }
}

/// Exact `‖P‖_{L¹(φ)}` for a one-dimensional Hermite series, together with its
/// gradient with respect to the coefficients.
pub fn series_l1_with_gradient(coeffs: &[f64]) -> (f64, Vec<f64>) {
    let n = coeffs.len().saturating_sub(1);
    if coeffs.is_empty() {
        return (0.0, Vec::new());
    }
    let roots = series_roots(coeffs);
    let mut fences = Vec::with_capacity(roots.len() + 2);
    fences.push(f64::NEG_INFINITY);
    fences.extend(roots);
    fences.push(f64::INFINITY);
    let mut total = crate::special::Compensated::new();
    let mut grad = vec![0.0; n + 1];
    for w in fences.windows(2) {
        let seg = hermite_segment_integrals(n, w[0], w[1]);
        let signed: f64 = crate::special::compensated_sum(coeffs.iter().zip(&seg).map(|(c, s)| c * s));
        let s = if signed < 0.0 { -1.0 } else { 1.0 };
        total.add(signed.abs());
        for (g, v) in grad.iter_mut().zip(&seg) {
            *g += s * v;
        }
    }
    (total.value(), grad)
}

pub fn series_l1(coeffs: &[f64]) -> f64 {
    series_l1_with_gradient(coeffs).0
}

/// `φ_d^{1/2}` at the origin, the Nikolskii extremal value for the constant polynomial.
pub fn sqrt_phi_peak(d: usize) -> f64 {
    libm::pow(INV_SQRT_2PI, 0.5 * d as f64)
}
