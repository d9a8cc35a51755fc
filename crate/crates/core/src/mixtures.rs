//! Gaussian location mixtures over finitely atomic mixing measures.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, sqrt};

use crate::divergences::{self, QuadratureSpec};
use crate::error::{domain, Error, Result};
use crate::hermite::{self, MultiIndex, DEFAULT_INDEX_CAP};
use crate::special::{log_sum_exp, Compensated, INV_SQRT_2PI, LN_SQRT_2PI};

/// Extra degrees summed beyond `n` when estimating the expansion remainder.
pub const DEFAULT_TAIL_DEGREES: u32 = 60;

/// A probability measure with finitely many atoms in `[−M, M]^d`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "MeasureRepr", into = "MeasureRepr"))]
pub struct MixingMeasure {
    d: usize,
    radius: f64,
    /// Row-major, `len() × d`.
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

/// Wire form `{d, M, atoms: [[...]], weights}`; deserialization goes through [`MixingMeasure::new`].
#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct MeasureRepr {
    d: usize,
    #[serde(rename = "M")]
    radius: f64,
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[cfg(feature = "serde")]
impl TryFrom<MeasureRepr> for MixingMeasure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        if let Some(bad) = r.atoms.iter().find(|a| a.len() != r.d) {
            return Err(Error::InvalidMeasure(format!("atom of length {} in dimension {}", bad.len(), r.d)));
        }
        MixingMeasure::new(r.d, r.radius, r.atoms.concat(), r.weights)
    }
}

#[cfg(feature = "serde")]
impl From<MixingMeasure> for MeasureRepr {
    fn from(m: MixingMeasure) -> Self {
        let atoms = m.atoms.chunks(m.d).map(<[f64]>::to_vec).collect();
        Self { d: m.d, radius: m.radius, atoms, weights: m.weights }
    }
}

impl MixingMeasure {
    /// Validates nonnegative weights summing to one (within `1e−12`) and atoms inside the cube.
    pub fn new(d: usize, radius: f64, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(domain("d", 0.0));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(domain("M", radius));
        }
        if weights.is_empty() || atoms.len() != weights.len() * d {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not form {} atoms in dimension {d}",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not a nonnegative number")));
        }
        let total = crate::special::compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        let slack = radius * 1e-12;
        if let Some(a) = atoms.iter().find(|a| !a.is_finite() || a.abs() > radius + slack) {
            return Err(Error::InvalidMeasure(format!("atom coordinate {a} lies outside [-{radius}, {radius}]")));
        }
        Ok(Self { d, radius, atoms, weights })
    }

    pub fn dirac(point: &[f64], radius: f64) -> Result<Self> {
        Self::new(point.len(), radius, point.to_vec(), vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        &self.atoms[j * self.d..(j + 1) * self.d]
    }

    pub fn atoms_flat(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest `|θ_i|` over all atoms; never exceeds `M`.
    pub fn extent(&self) -> f64 {
        self.atoms.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    /// The same measure declared on a larger cube.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.d, radius, self.atoms.clone(), self.weights.clone())
    }

    /// Product with point masses at the origin in `extra` further coordinates.
    pub fn lift_with_zeros(&self, extra: usize) -> Result<Self> {
        let d = self.d + extra;
        let mut atoms = Vec::with_capacity(self.len() * d);
        for j in 0..self.len() {
            atoms.extend_from_slice(self.atom(j));
            atoms.extend(core::iter::repeat_n(0.0, extra));
        }
        Self::new(d, self.radius, atoms, self.weights.clone())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for j in 0..self.len() {
            for (mi, a) in m.iter_mut().zip(self.atom(j)) {
                *mi += self.weights[j] * a;
            }
        }
        m
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `φ_d(x)`.
pub fn phi_d(x: &[f64]) -> f64 {
    libm::pow(INV_SQRT_2PI, x.len() as f64) * exp(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
}

/// `f_π(x) = Σ_j w_j φ_d(x − θ_j)`.
pub fn mixture_density(mix: &MixingMeasure, x: &[f64]) -> Result<f64> {
    if x.len() != mix.d {
        return Err(Error::DimensionMismatch { left: mix.d, right: x.len() });
    }
    let norm = libm::pow(INV_SQRT_2PI, mix.d as f64);
    let mut acc = Compensated::new();
    for j in 0..mix.len() {
        acc.add(mix.weights[j] * exp(-0.5 * sq_dist(x, mix.atom(j))));
    }
    Ok(norm * acc.value())
}

/// `ln f_π(x)` in log-sum-exp form; finite far beyond where the density underflows.
pub fn log_mixture_density(mix: &MixingMeasure, x: &[f64]) -> Result<f64> {
    if x.len() != mix.d {
        return Err(Error::DimensionMismatch { left: mix.d, right: x.len() });
    }
    let terms: Vec<f64> = (0..mix.len())
        .filter(|&j| mix.weights[j] > 0.0)
        .map(|j| libm::log(mix.weights[j]) - 0.5 * sq_dist(x, mix.atom(j)))
        .collect();
    Ok(log_sum_exp(&terms) - LN_SQRT_2PI * mix.d as f64)
}

/// `∇f_π(x) = Σ_j w_j (θ_j − x) φ_d(x − θ_j)`.
pub fn mixture_gradient(mix: &MixingMeasure, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mix.d {
        return Err(Error::DimensionMismatch { left: mix.d, right: x.len() });
    }
    let norm = libm::pow(INV_SQRT_2PI, mix.d as f64);
    let mut g = vec![0.0; mix.d];
    for j in 0..mix.len() {
        let a = mix.atom(j);
        let k = mix.weights[j] * norm * exp(-0.5 * sq_dist(x, a));
        for i in 0..mix.d {
            g[i] += k * (a[i] - x[i]);
        }
    }
    Ok(g)
}

/// The signed measure `π − η` with coincident atoms merged.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedAtoms {
    d: usize,
    atoms: Vec<f64>,
    coefs: Vec<f64>,
}

impl SignedAtoms {
    pub fn difference(pi: &MixingMeasure, eta: &MixingMeasure) -> Result<Self> {
        if pi.d != eta.d {
            return Err(Error::DimensionMismatch { left: pi.d, right: eta.d });
        }
        let d = pi.d;
        let mut atoms: Vec<f64> = Vec::new();
        let mut coefs: Vec<Compensated> = Vec::new();
        let mut push = |a: &[f64], w: f64| {
            let found = (0..coefs.len()).find(|&i| &atoms[i * d..(i + 1) * d] == a);
            match found {
                Some(i) => coefs[i].add(w),
                None => {
                    atoms.extend_from_slice(a);
                    let mut c = Compensated::new();
                    c.add(w);
                    coefs.push(c);
                }
            }
        };
        for j in 0..pi.len() {
            push(pi.atom(j), pi.weights[j]);
        }
        for j in 0..eta.len() {
            push(eta.atom(j), -eta.weights[j]);
        }
        let mut out = Self { d, atoms: Vec::new(), coefs: Vec::new() };
        for (i, c) in coefs.iter().enumerate() {
            let v = c.value();
            if v != 0.0 {
                out.atoms.extend_from_slice(&atoms[i * d..(i + 1) * d]);
                out.coefs.push(v);
            }
        }
        Ok(out)
    }

    pub fn from_parts(d: usize, atoms: Vec<f64>, coefs: Vec<f64>) -> Result<Self> {
        if d == 0 || atoms.len() != coefs.len() * d {
            return Err(Error::InvalidMeasure("signed atoms and coefficients disagree".into()));
        }
        Ok(Self { d, atoms, coefs })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.coefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        &self.atoms[j * self.d..(j + 1) * self.d]
    }

    pub fn coefs(&self) -> &[f64] {
        &self.coefs
    }

    /// Atoms flattened row-major.
    pub fn atom_coords(&self) -> &[f64] {
        &self.atoms
    }

    pub fn extent(&self) -> f64 {
        self.atoms.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    /// `Σ_j |c_j|`.
    pub fn abs_mass(&self) -> f64 {
        self.coefs.iter().map(|c| c.abs()).sum()
    }

    /// `(f_π − f_η)(x)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        let norm = libm::pow(INV_SQRT_2PI, self.d as f64);
        let mut acc = Compensated::new();
        for j in 0..self.len() {
            acc.add(self.coefs[j] * exp(-0.5 * sq_dist(x, self.atom(j))));
        }
        norm * acc.value()
    }

    /// `g(x) = Σ_j c_j exp(⟨θ_j, x⟩ − ‖θ_j‖²/2)`.
    pub fn ratio(&self, x: &[f64]) -> f64 {
        let mut acc = Compensated::new();
        for j in 0..self.len() {
            let a = self.atom(j);
            let e: f64 = a.iter().zip(x).map(|(t, v)| t * v - 0.5 * t * t).sum();
            acc.add(self.coefs[j] * exp(e));
        }
        acc.value()
    }
}

/// Moment differences `Δ_𝐤 = ∫ θ^𝐤 d(π − η)` for `|𝐤| ≤ max_degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedMoments {
    pub d: usize,
    pub max_degree: u32,
    /// Graded lexicographic order, aligned with `delta`.
    pub indices: Vec<MultiIndex>,
    pub delta: Vec<f64>,
}

impl SignedMoments {
    pub fn get(&self, k: &MultiIndex) -> Option<f64> {
        self.indices.iter().position(|i| i == k).map(|p| self.delta[p])
    }

    /// Hermite coefficients `Δ_𝐤/√(𝐤!)` in index order.
    pub fn hermite_coefficients(&self) -> Vec<f64> {
        self.indices.iter().zip(&self.delta).map(|(k, dk)| dk * exp(-0.5 * k.ln_factorial())).collect()
    }

    /// `Σ Δ_𝐤²/𝐤!` over indices with `lo ≤ |𝐤| ≤ hi`.
    pub fn energy_between(&self, lo: u32, hi: u32) -> f64 {
        let mut acc = Compensated::new();
        for (k, dk) in self.indices.iter().zip(&self.delta) {
            let t = k.total_degree();
            if t >= lo && t <= hi && *dk != 0.0 {
                acc.add(dk * dk * exp(-k.ln_factorial()));
            }
        }
        acc.value()
    }
}

pub fn moment_diffs(pi: &MixingMeasure, eta: &MixingMeasure, max_degree: u32) -> Result<SignedMoments> {
    let diff = SignedAtoms::difference(pi, eta)?;
    signed_moments(&diff, max_degree)
}

pub fn signed_moments(diff: &SignedAtoms, max_degree: u32) -> Result<SignedMoments> {
    let d = diff.dim();
    let indices = hermite::multi_indices(max_degree, d, DEFAULT_INDEX_CAP)?;
    let n = max_degree as usize;
    // powers[j][i][k] = θ_{j,i}^k
    let powers: Vec<Vec<Vec<f64>>> = (0..diff.len())
        .map(|j| {
            diff.atom(j)
                .iter()
                .map(|&t| {
                    let mut p = vec![1.0; n + 1];
                    for k in 1..=n {
                        p[k] = p[k - 1] * t;
                    }
                    p
                })
                .collect()
        })
        .collect();
    let delta = indices
        .iter()
        .map(|k| {
            let mut acc = Compensated::new();
            for (j, pj) in powers.iter().enumerate() {
                let mono: f64 = k.entries().iter().zip(pj).map(|(&e, p)| p[e as usize]).product();
                acc.add(diff.coefs()[j] * mono);
            }
            acc.value()
        })
        .collect();
    Ok(SignedMoments { d, max_degree, indices, delta })
}

/// Norms of the split `g = q + r` at truncation degree `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpansionSplit {
    pub n: u32,
    pub q_norm_l1: f64,
    pub q_norm_l2: f64,
    /// `(4eM²d/(n+1))^{(n+1)/2}`; certified only when `r_bound_valid`.
    pub r_norm_l2_bound: f64,
    pub r_bound_valid: bool,
    /// `√(Σ_{n<|𝐤|≤n_big} Δ_𝐤²/𝐤!)`.
    pub r_norm_l2_estimate: f64,
    pub n_big: u32,
}

/// Remainder bound on `‖r‖_{L²(φ_d)}` and whether its precondition `n+1 ≥ 16 ∨ 8eM²d` holds.
pub fn remainder_bound(n: u32, radius: f64, d: usize) -> (f64, bool) {
    let e = core::f64::consts::E;
    let s = 4.0 * e * radius * radius * d as f64;
    let np1 = n as f64 + 1.0;
    let valid = np1 >= 16.0f64.max(2.0 * s);
    (libm::pow(s / np1, 0.5 * np1), valid)
}

pub fn expansion_split(pi: &MixingMeasure, eta: &MixingMeasure, n: u32, quad: &QuadratureSpec) -> Result<ExpansionSplit> {
    expansion_split_with(pi, eta, n, n + DEFAULT_TAIL_DEGREES, quad)
}

pub fn expansion_split_with(
    pi: &MixingMeasure,
    eta: &MixingMeasure,
    n: u32,
    n_big: u32,
    quad: &QuadratureSpec,
) -> Result<ExpansionSplit> {
    let n_big = n_big.max(n);
    let moments = moment_diffs(pi, eta, n_big)?;
    let d = moments.d;
    let radius = pi.radius.max(eta.radius);
    let q_norm_l2 = sqrt(moments.energy_between(0, n));
    let r_norm_l2_estimate = sqrt(moments.energy_between(n + 1, n_big));
    let coeffs = moments.hermite_coefficients();
    let q_norm_l1 = if q_norm_l2 == 0.0 {
        0.0
    } else if d == 1 {
        hermite::series_l1(&coeffs[..=n as usize])
    } else {
        let (idx, c): (Vec<_>, Vec<_>) = moments
            .indices
            .iter()
            .zip(&coeffs)
            .filter(|(k, _)| k.total_degree() <= n)
            .map(|(k, c)| (k.clone(), *c))
            .unzip();
        let q = |x: &[f64]| polynomial_value(&idx, &c, x, n);
        divergences::phi_weighted_abs(d, q, quad)?.value
    };
    let (r_norm_l2_bound, r_bound_valid) = remainder_bound(n, radius, d);
    Ok(ExpansionSplit { n, q_norm_l1, q_norm_l2, r_norm_l2_bound, r_bound_valid, r_norm_l2_estimate, n_big })
}

/// `Σ c_𝐤 h_𝐤(x)` for an explicit index list of total degree at most `n`.
pub fn polynomial_value(indices: &[MultiIndex], coeffs: &[f64], x: &[f64], n: u32) -> f64 {
    let tables: Vec<Vec<f64>> = x.iter().map(|&xi| hermite::hermite_table(n as usize, xi)).collect();
    let mut acc = Compensated::new();
    for (k, c) in indices.iter().zip(coeffs) {
        let h: f64 = k.entries().iter().zip(&tables).map(|(&e, t)| t[e as usize]).product();
        acc.add(c * h);
    }
    acc.value()
}

/// `g(x) = (f_π − f_η)(x)/φ_d(x)`, evaluated without dividing densities.
pub fn g_ratio(pi: &MixingMeasure, eta: &MixingMeasure, x: &[f64]) -> Result<f64> {
    if x.len() != pi.d {
        return Err(Error::DimensionMismatch { left: pi.d, right: x.len() });
    }
    Ok(SignedAtoms::difference(pi, eta)?.ratio(x))
}
