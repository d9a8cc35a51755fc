//! TV, Hellinger, χ² and KL between Gaussian mixtures, plus φ-weighted norms
//! of `g = (f_π − f_η)/φ_d`.
//!
//! One-dimensional integrals use adaptive Gauss–Kronrod on `[−R, R]` with
//! breakpoints at the sign changes of `f_π − f_η`, and an analytic bound for
//! the mass outside. Two-dimensional integrals nest the same rule. Higher
//! dimensions fall back to tensor Gauss–Hermite with a heuristic error.
//!
//! Every integrand is written in terms of `D = f_π − f_η`, which is summed
//! over merged signed atoms, so near-identical mixtures do not lose their
//! difference to cancellation between two separately computed densities.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;
use core::str::FromStr;

use libm::{exp, log, log1p, sqrt};

use crate::error::{domain, Error, Result};
use crate::mixtures::{mixture_density, MixingMeasure, SignedAtoms};
use crate::precision::{Arith, Extended, Tier};
use crate::quad::{self, Integral, Tolerance};
use crate::special::{normal_pdf, normal_sf, Compensated, INV_SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Family {
    /// Adaptive for `d ≤ 2`, Gauss–Hermite beyond.
    #[default]
    Auto,
    GaussHermite,
    AdaptiveInterval,
}

/// Integration strategy shared by every divergence and norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub family: Family,
    /// `None` picks the smallest radius whose tail bound is below `abs_tol / 10`.
    pub truncation_radius: Option<f64>,
    pub node_budget: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub precision: Tier,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            family: Family::Auto,
            truncation_radius: None,
            node_budget: 2_000_000,
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            precision: Tier::Double,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tol(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_precision(mut self, tier: Tier) -> Self {
        self.precision = tier;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) {
            return Err(domain("abs_tol", self.abs_tol));
        }
        if !(self.rel_tol > 0.0) {
            return Err(domain("rel_tol", self.rel_tol));
        }
        if let Some(r) = self.truncation_radius {
            if !(r > 0.0) {
                return Err(domain("truncation_radius", r));
            }
        }
        Ok(())
    }

    fn tolerance(&self) -> Tolerance {
        Tolerance { abs: self.abs_tol, rel: self.rel_tol, max_evals: self.node_budget }
    }

    /// Radius floor `M + max(12, √(2 ln(1/abs_tol)))`.
    fn default_radius(&self, extent: f64) -> f64 {
        extent + 12.0f64.max(sqrt(2.0 * log(1.0 / self.abs_tol)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DivergenceKind {
    Tv,
    H,
    H2,
    Chi2,
    Kl,
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DivergenceKind::Tv => "TV",
            DivergenceKind::H => "H",
            DivergenceKind::H2 => "H2",
            DivergenceKind::Chi2 => "CHI2",
            DivergenceKind::Kl => "KL",
        })
    }
}

impl FromStr for DivergenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TV" => Ok(DivergenceKind::Tv),
            "H" => Ok(DivergenceKind::H),
            "H2" => Ok(DivergenceKind::H2),
            "CHI2" | "CHI" => Ok(DivergenceKind::Chi2),
            "KL" => Ok(DivergenceKind::Kl),
            _ => Err(Error::Unsupported(String::from("kind must be one of TV, H, H2, CHI2, KL"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DivergenceResult {
    pub value: f64,
    /// Quadrature error estimate plus the truncated-tail bound.
    pub error_bound: f64,
    pub nodes_used: usize,
    /// False when the node budget ran out before the tolerance was met.
    pub converged: bool,
    /// True when `error_bound` is an estimate rather than a bound (tensor Gauss–Hermite).
    pub heuristic: bool,
}

/// The integrands, each a function of `(p, q, D = p − q)` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Integrand {
    Tv,
    H2,
    Chi2,
    Kl,
    /// `|D|`, i.e. `|g| φ_d`.
    AbsDiff,
    /// `D²/φ_d`, i.e. `g² φ_d`.
    SqOverPhi,
}

/// Below this the reference density is treated as zero; the tail envelope covers the rest.
const DENSITY_FLOOR: f64 = 1e-300;

/// `(1+r) ln(1+r) − r`, accurate for small `r`.
fn kl_kernel(r: f64) -> f64 {
    if r.abs() < 1e-3 {
        let r2 = r * r;
        r2 * (0.5 - r / 6.0 + r2 / 12.0 - r2 * r / 20.0 + r2 * r2 / 30.0)
    } else {
        (1.0 + r) * log1p(r) - r
    }
}

impl Integrand {
    fn kinked(self) -> bool {
        matches!(self, Integrand::Tv | Integrand::AbsDiff)
    }

    #[inline]
    fn value(self, t: Triple, phi: f64) -> f64 {
        match self {
            Integrand::Tv => 0.5 * t.d.abs(),
            Integrand::AbsDiff => t.d.abs(),
            Integrand::H2 => {
                let s = sqrt(t.p.max(0.0)) + sqrt(t.q.max(0.0));
                if s == 0.0 {
                    0.0
                } else {
                    0.5 * (t.d / s) * (t.d / s)
                }
            }
            Integrand::Chi2 => {
                if t.q < DENSITY_FLOOR {
                    0.0
                } else {
                    t.d * (t.d / t.q)
                }
            }
            Integrand::Kl => {
                if t.q < DENSITY_FLOOR {
                    0.0
                } else {
                    t.q * kl_kernel(t.d / t.q)
                }
            }
            Integrand::SqOverPhi => {
                if t.d == 0.0 {
                    0.0
                } else {
                    t.d * (t.d / phi)
                }
            }
        }
    }

    /// Upper bound on the integral outside `[−R, R]^d`.
    ///
    /// `extent` bounds every atom coordinate and `mass = Σ|c_j|` is the total
    /// variation of the signed mixing measure.
    pub(crate) fn tail_bound(self, radius: f64, extent: f64, mass: f64, d: usize) -> f64 {
        let m = extent;
        let dd = d as f64;
        let phi0 = INV_SQRT_2PI;
        match self {
            // each signed atom puts at most 2Φ̄(R−M) of its mass outside, per axis
            Integrand::Tv | Integrand::H2 => mass * dd * normal_sf(radius - m),
            Integrand::AbsDiff => 2.0 * mass * dd * normal_sf(radius - m),
            // KL ≤ χ² pointwise, so χ²'s envelope covers both
            Integrand::Chi2 | Integrand::Kl => {
                let tail1 = 2.0 * exp(4.0 * m * m) * normal_sf(radius - 3.0 * m);
                let full1 = 2.0 * m * phi0 * exp(2.0 * m * m) + 2.0 * exp(4.0 * m * m);
                mass * mass * dd * tail1 * libm::pow(full1, dd - 1.0)
            }
            Integrand::SqOverPhi => {
                let tail1 = 2.0 * exp(m * m) * normal_sf(radius - 2.0 * m);
                let full1 = 2.0 * m * phi0 * exp(0.5 * m * m) + 2.0 * exp(m * m);
                mass * mass * dd * tail1 * libm::pow(full1, dd - 1.0)
            }
        }
    }
}

/// Densities `p`, `q` and their difference `D` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Triple {
    pub p: f64,
    pub q: f64,
    pub d: f64,
}

/// A one-dimensional view of a mixture pair.
pub trait PairSlice {
    fn eval(&mut self, x: f64) -> Triple;

    /// `D` on the grid `lo + i·step`, `i < count`.
    fn diff_on_grid(&mut self, lo: f64, step: f64, count: usize) -> Vec<f64> {
        (0..count).map(|i| self.eval(lo + i as f64 * step).d).collect()
    }
}

/// Double-precision 1-D pair, `D` summed over merged signed atoms.
pub struct DoublePair<'a> {
    pi: &'a MixingMeasure,
    eta: &'a MixingMeasure,
    diff: SignedAtoms,
}

impl<'a> DoublePair<'a> {
    pub fn new(pi: &'a MixingMeasure, eta: &'a MixingMeasure) -> Result<Self> {
        Ok(Self { pi, eta, diff: SignedAtoms::difference(pi, eta)? })
    }
}

fn density_1d(mix: &MixingMeasure, x: f64) -> f64 {
    let mut acc = Compensated::new();
    for (a, w) in mix.atoms_flat().iter().zip(mix.weights()) {
        acc.add(w * normal_pdf(x - a));
    }
    acc.value()
}

impl PairSlice for DoublePair<'_> {
    fn eval(&mut self, x: f64) -> Triple {
        let mut acc = Compensated::new();
        for (a, c) in self.diff.atom_coords().iter().zip(self.diff.coefs()) {
            acc.add(c * normal_pdf(x - a));
        }
        Triple { p: density_1d(self.pi, x), q: density_1d(self.eta, x), d: acc.value() }
    }
}

/// 1-D pair whose difference is evaluated in the arithmetic `A`.
///
/// Atoms and signed coefficients live in `A::Num`; only `D` is formed in that
/// arithmetic. `p` and `q` are evaluated in binary64 from rounded atoms, which
/// is enough because neither suffers cancellation.
pub struct ArithPair<A: Arith> {
    arith: A,
    /// `(a_j, c_j e^{−a_j²/2})` for atoms with `a_j > 0`, each paired with its mirror when present.
    positive: Vec<(A::Num, A::Num, Option<A::Num>)>,
    /// Atoms without a mirror (including `a = 0`), `(a_j, c_j e^{−a_j²/2})`.
    lone: Vec<(A::Num, A::Num)>,
    p_atoms: Vec<(f64, f64)>,
    q_atoms: Vec<(f64, f64)>,
    extent: f64,
    mass: f64,
}

impl<A: Arith> ArithPair<A> {
    /// `pi`, `eta` as `(atom, weight)` lists in the working arithmetic.
    pub fn new(mut arith: A, pi: &[(A::Num, A::Num)], eta: &[(A::Num, A::Num)]) -> Self {
        // merge coincident atoms into signed coefficients
        let mut merged: Vec<(A::Num, f64, A::Num)> = Vec::new();
        let signed = pi.iter().map(|(a, w)| (a, w, false)).chain(eta.iter().map(|(a, w)| (a, w, true)));
        for (a, w, negate) in signed {
            let w = if negate { arith.neg(w) } else { w.clone() };
            let key = arith.to_f64(a);
            let mut slot = None;
            for (i, e) in merged.iter().enumerate() {
                if e.1 == key {
                    let gap = arith.sub(&e.0, a);
                    if arith.to_f64(&gap) == 0.0 {
                        slot = Some(i);
                        break;
                    }
                }
            }
            match slot {
                Some(i) => merged[i].2 = arith.add(&merged[i].2, &w),
                None => merged.push((a.clone(), key, w)),
            }
        }
        let mass = merged.iter().map(|e| arith.to_f64(&e.2).abs()).sum::<f64>();
        let half = arith.from_f64(-0.5);
        let mut scaled: Vec<(A::Num, f64, A::Num)> = Vec::with_capacity(merged.len());
        for (a, key, c) in merged {
            if arith.to_f64(&c) == 0.0 {
                continue;
            }
            let a2 = arith.mul(&a, &a);
            let e = arith.mul(&half, &a2);
            let e = arith.exp(&e);
            let b = arith.mul(&c, &e);
            scaled.push((a, key, b));
        }
        let extent = scaled.iter().fold(0.0f64, |m, e| m.max(e.1.abs()));
        let mut positive = Vec::new();
        let mut lone = Vec::new();
        // pair each positive atom with an exact mirror
        let mut used = vec![false; scaled.len()];
        for i in 0..scaled.len() {
            if used[i] || scaled[i].1 <= 0.0 {
                continue;
            }
            used[i] = true;
            let mut mirror = None;
            for j in 0..scaled.len() {
                if !used[j] && scaled[j].1 == -scaled[i].1 {
                    let s = arith.add(&scaled[j].0, &scaled[i].0);
                    if arith.to_f64(&s) == 0.0 {
                        mirror = Some(j);
                        break;
                    }
                }
            }
            let m = mirror.map(|j| {
                used[j] = true;
                scaled[j].2.clone()
            });
            positive.push((scaled[i].0.clone(), scaled[i].2.clone(), m));
        }
        for (i, e) in scaled.drain(..).enumerate() {
            if !used[i] {
                lone.push((e.0, e.2));
            }
        }
        let to_pairs = |arith: &A, v: &[(A::Num, A::Num)]| -> Vec<(f64, f64)> {
            v.iter().map(|(a, w)| (arith.to_f64(a), arith.to_f64(w))).collect()
        };
        let p_atoms = to_pairs(&arith, pi);
        let q_atoms = to_pairs(&arith, eta);
        Self { arith, positive, lone, p_atoms, q_atoms, extent, mass }
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Total variation `Σ|c_j|` of the merged signed measure.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `S(x) = Σ_j c_j e^{a_j x − a_j²/2}`, so that `D(x) = φ(x) S(x)`.
    pub fn ratio(&mut self, x: f64) -> f64 {
        let ar = &mut self.arith;
        let xn = ar.from_f64(x);
        let mut terms: Vec<A::Num> = Vec::with_capacity(2 * self.positive.len() + self.lone.len());
        for (a, b, mirror) in &self.positive {
            let ax = ar.mul(a, &xn);
            let e = ar.exp(&ax);
            terms.push(ar.mul(b, &e));
            if let Some(bm) = mirror {
                let t = ar.div(bm, &e);
                terms.push(t);
            }
        }
        for (a, b) in &self.lone {
            let ax = ar.mul(a, &xn);
            let e = ar.exp(&ax);
            terms.push(ar.mul(b, &e));
        }
        let s = ar.sum(&terms);
        ar.to_f64(&s)
    }

    fn mixture(atoms: &[(f64, f64)], x: f64) -> f64 {
        let mut acc = Compensated::new();
        for (a, w) in atoms {
            acc.add(w * normal_pdf(x - a));
        }
        acc.value()
    }

    pub fn arith(&mut self) -> &mut A {
        &mut self.arith
    }
}

impl<A: Arith> PairSlice for ArithPair<A> {
    fn eval(&mut self, x: f64) -> Triple {
        let s = self.ratio(x);
        Triple { p: Self::mixture(&self.p_atoms, x), q: Self::mixture(&self.q_atoms, x), d: normal_pdf(x) * s }
    }

    fn diff_on_grid(&mut self, lo: f64, step: f64, count: usize) -> Vec<f64> {
        // e^{a(x+h)} = e^{ax}·e^{ah}: two exponentials per atom for the whole grid
        let ar = &mut self.arith;
        let lo_n = ar.from_f64(lo);
        let h_n = ar.from_f64(step);
        let one = ar.from_f64(1.0);
        // (current e^{ax}, step factor, coefficient)
        let mut walkers: Vec<(A::Num, A::Num, A::Num)> = Vec::new();
        let starts = self.positive.iter().map(|(a, b, m)| (a, b, m.as_ref())).chain(self.lone.iter().map(|(a, b)| (a, b, None)));
        for (a, b, mirror) in starts {
            let ax = ar.mul(a, &lo_n);
            let e = ar.exp(&ax);
            let ah = ar.mul(a, &h_n);
            let f = ar.exp(&ah);
            if let Some(bm) = mirror {
                let ei = ar.div(&one, &e);
                let fi = ar.div(&one, &f);
                walkers.push((ei, fi, bm.clone()));
            }
            walkers.push((e, f, b.clone()));
        }
        let mut out = Vec::with_capacity(count);
        let mut terms: Vec<A::Num> = Vec::with_capacity(walkers.len());
        for i in 0..count {
            let x = lo + i as f64 * step;
            terms.clear();
            for (e, _, b) in &walkers {
                terms.push(ar.mul(b, e));
            }
            let s = ar.sum(&terms);
            out.push(normal_pdf(x) * ar.to_f64(&s));
            for (e, f, _) in walkers.iter_mut() {
                *e = ar.mul(e, f);
            }
        }
        out
    }
}

/// Integral of `integrand` along one line, with breakpoints at sign changes of `D`.
fn line_integral(
    integrand: Integrand,
    slice: &mut dyn PairSlice,
    lo: f64,
    hi: f64,
    scan_step: Option<f64>,
    tol: Tolerance,
) -> Integral {
    let mut breaks = vec![lo];
    let mut extra_evals = 0;
    if let Some(step) = scan_step {
        let count = (((hi - lo) / step).ceil() as usize).max(1);
        let h = (hi - lo) / count as f64;
        let vals = slice.diff_on_grid(lo, h, count + 1);
        extra_evals += count + 1;
        for i in 0..count {
            let (a, b) = (vals[i], vals[i + 1]);
            if a != 0.0 && b != 0.0 && (a > 0.0) != (b > 0.0) {
                let x0 = lo + i as f64 * h;
                let x1 = if i + 1 == count { hi } else { lo + (i + 1) as f64 * h };
                let mut n = 0;
                let root = crate::special::illinois(
                    |x| {
                        n += 1;
                        slice.eval(x).d
                    },
                    x0,
                    x1,
                    a,
                    b,
                    1e-11 * (1.0 + x0.abs()),
                );
                extra_evals += n;
                breaks.push(root);
            } else if b == 0.0 && i + 1 < count {
                breaks.push(lo + (i + 1) as f64 * h);
            }
        }
    }
    breaks.push(hi);
    breaks.dedup();
    let mut r = quad::integrate(|x| integrand.value(slice.eval(x), normal_pdf(x)), &breaks, tol);
    r.evals += extra_evals;
    r
}

/// Smallest radius (in steps of 0.25 above the default floor) whose tail bound is below `target`.
fn choose_radius(integrand: Integrand, spec: &QuadratureSpec, extent: f64, mass: f64, d: usize) -> f64 {
    if let Some(r) = spec.truncation_radius {
        return r;
    }
    let target = 0.1 * spec.abs_tol;
    let mut r = spec.default_radius(extent);
    while integrand.tail_bound(r, extent, mass, d) > target && r < extent * 4.0 + 60.0 {
        r += 0.25;
    }
    r
}

struct Raw {
    value: f64,
    error: f64,
    evals: usize,
    converged: bool,
    heuristic: bool,
}

fn check_pair(pi: &MixingMeasure, eta: &MixingMeasure) -> Result<()> {
    if pi.dim() != eta.dim() {
        return Err(Error::DimensionMismatch { left: pi.dim(), right: eta.dim() });
    }
    Ok(())
}

/// Integrates over a one-dimensional [`PairSlice`] with tail control.
pub(crate) fn integrate_slice(
    integrand: Integrand,
    slice: &mut dyn PairSlice,
    extent: f64,
    mass: f64,
    spec: &QuadratureSpec,
    scan_step: f64,
) -> (f64, f64, usize, bool) {
    let r = choose_radius(integrand, spec, extent, mass, 1);
    let tail = integrand.tail_bound(r, extent, mass, 1);
    let scan = if integrand.kinked() { Some(scan_step) } else { Some(scan_step * 4.0) };
    let res = line_integral(integrand, slice, -r, r, scan, spec.tolerance());
    (res.value, res.error + tail, res.evals, res.converged)
}

fn integrate_pair(integrand: Integrand, pi: &MixingMeasure, eta: &MixingMeasure, spec: &QuadratureSpec) -> Result<Raw> {
    check_pair(pi, eta)?;
    spec.validate()?;
    let d = pi.dim();
    let diff = SignedAtoms::difference(pi, eta)?;
    if diff.is_empty() {
        return Ok(Raw { value: 0.0, error: 0.0, evals: 0, converged: true, heuristic: false });
    }
    let extent = pi.extent().max(eta.extent());
    let mass = diff.abs_mass();
    let family = match spec.family {
        Family::Auto if d <= 2 => Family::AdaptiveInterval,
        Family::Auto => Family::GaussHermite,
        f => f,
    };
    if !matches!(spec.precision, Tier::Double) && (d != 1 || family != Family::AdaptiveInterval) {
        return Err(Error::Unsupported(String::from(
            "extended precision is available for one-dimensional adaptive integration only",
        )));
    }
    match (family, d) {
        (Family::AdaptiveInterval, 1) => {
            let (value, error, evals, converged) = match spec.precision {
                Tier::Double => {
                    let mut slice = DoublePair::new(pi, eta)?;
                    integrate_slice(integrand, &mut slice, extent, mass, spec, 0.01)
                }
                Tier::Extended { digits } => {
                    let mut ext = Extended::new(digits)?;
                    let lift = |ar: &mut Extended, m: &MixingMeasure| -> Vec<_> {
                        m.atoms_flat().iter().zip(m.weights()).map(|(a, w)| (ar.from_f64(*a), ar.from_f64(*w))).collect()
                    };
                    let p = lift(&mut ext, pi);
                    let q = lift(&mut ext, eta);
                    let mut slice = ArithPair::new(ext, &p, &q);
                    integrate_slice(integrand, &mut slice, extent, mass, spec, 0.01)
                }
            };
            Ok(Raw { value, error, evals, converged, heuristic: false })
        }
        (Family::AdaptiveInterval, 2) => Ok(nested_2d(integrand, pi, eta, &diff, extent, mass, spec)),
        (Family::AdaptiveInterval, _) => Err(Error::Unsupported(String::from(
            "adaptive interval integration supports d <= 2; use Gauss-Hermite",
        ))),
        (_, _) => gauss_hermite_pair(integrand, pi, eta, &diff, extent, mass, spec),
    }
}

/// `p`, `q`, `D` in two dimensions with the first-axis factors cached per line.
struct Plane<'a> {
    pi: &'a MixingMeasure,
    eta: &'a MixingMeasure,
    diff: &'a SignedAtoms,
    x1: f64,
    fp: Vec<f64>,
    fq: Vec<f64>,
    fd: Vec<f64>,
}

impl<'a> Plane<'a> {
    fn new(pi: &'a MixingMeasure, eta: &'a MixingMeasure, diff: &'a SignedAtoms) -> Self {
        let mut s = Self { pi, eta, diff, x1: f64::NAN, fp: Vec::new(), fq: Vec::new(), fd: Vec::new() };
        s.set_line(0.0);
        s
    }

    fn set_line(&mut self, x1: f64) {
        if x1 == self.x1 {
            return;
        }
        self.x1 = x1;
        self.fp = (0..self.pi.len()).map(|j| self.pi.weights()[j] * normal_pdf(x1 - self.pi.atom(j)[0])).collect();
        self.fq = (0..self.eta.len()).map(|j| self.eta.weights()[j] * normal_pdf(x1 - self.eta.atom(j)[0])).collect();
        self.fd = (0..self.diff.len()).map(|j| self.diff.coefs()[j] * normal_pdf(x1 - self.diff.atom(j)[0])).collect();
    }
}

impl PairSlice for Plane<'_> {
    fn eval(&mut self, x2: f64) -> Triple {
        let mut p = Compensated::new();
        for (j, f) in self.fp.iter().enumerate() {
            p.add(f * normal_pdf(x2 - self.pi.atom(j)[1]));
        }
        let mut q = Compensated::new();
        for (j, f) in self.fq.iter().enumerate() {
            q.add(f * normal_pdf(x2 - self.eta.atom(j)[1]));
        }
        let mut dd = Compensated::new();
        for (j, f) in self.fd.iter().enumerate() {
            dd.add(f * normal_pdf(x2 - self.diff.atom(j)[1]));
        }
        Triple { p: p.value(), q: q.value(), d: dd.value() }
    }
}

fn nested_2d(
    integrand: Integrand,
    pi: &MixingMeasure,
    eta: &MixingMeasure,
    diff: &SignedAtoms,
    extent: f64,
    mass: f64,
    spec: &QuadratureSpec,
) -> Raw {
    let r = choose_radius(integrand, spec, extent, mass, 2);
    let tail = integrand.tail_bound(r, extent, mass, 2);
    let mut plane = Plane::new(pi, eta, diff);
    nested_2d_core(&mut |x1, plane_ref: &mut Plane| plane_ref.set_line(x1), &mut plane, integrand, r, tail, spec)
}

fn nested_2d_core<S: PairSlice>(
    set_line: &mut dyn FnMut(f64, &mut S),
    slice: &mut S,
    integrand: Integrand,
    r: f64,
    tail: f64,
    spec: &QuadratureSpec,
) -> Raw {
    let inner_tol = Tolerance {
        abs: spec.abs_tol / (8.0 * r),
        rel: spec.rel_tol * 0.25,
        max_evals: spec.node_budget / 8,
    };
    let scan = if integrand.kinked() { Some(0.05) } else { None };
    let evals = Cell::new(0usize);
    let worst_inner = Cell::new(0.0f64);
    let all_converged = Cell::new(true);
    let outer_tol = Tolerance { abs: spec.abs_tol, rel: spec.rel_tol, max_evals: spec.node_budget / 64 };
    let outer = quad::integrate(
        |x1| {
            set_line(x1, slice);
            let res = line_integral(integrand, slice, -r, r, scan, inner_tol);
            evals.set(evals.get() + res.evals);
            worst_inner.set(worst_inner.get().max(res.error));
            if !res.converged {
                all_converged.set(false);
            }
            res.value
        },
        &[-r, 0.0, r],
        outer_tol,
    );
    Raw {
        value: outer.value,
        error: outer.error + 2.0 * r * worst_inner.get() + tail,
        evals: evals.get(),
        converged: outer.converged && all_converged.get(),
        heuristic: false,
    }
}

/// Tensor Gauss–Hermite of order `m` per axis for `∫ F`, with nodes
/// stretched by `scale` so the rule covers mixtures whose atoms sit away from 0.
fn tensor_gh<F: FnMut(&[f64]) -> f64>(d: usize, m: usize, scale: f64, mut f: F) -> f64 {
    let (x, w) = quad::gauss_hermite(m);
    let norm = libm::pow(INV_SQRT_2PI, d as f64);
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut acc = Compensated::new();
    loop {
        // ∫F(y)dy = scale^d ∫ F(scale·x)/φ_d(x) φ_d(x) dx
        let mut weight = 1.0;
        let mut sq = 0.0;
        for i in 0..d {
            point[i] = x[idx[i]] * scale;
            weight *= w[idx[i]] * scale;
            sq += x[idx[i]] * x[idx[i]];
        }
        acc.add(weight / (norm * exp(-0.5 * sq)) * f(&point));
        let mut k = 0;
        loop {
            if k == d {
                return acc.value();
            }
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn gh_order(d: usize, budget: usize) -> usize {
    let mut m = 2;
    while libm::pow((m + 1) as f64, d as f64) <= budget as f64 && m < 200 {
        m += 1;
    }
    m
}

fn gauss_hermite_pair(
    integrand: Integrand,
    pi: &MixingMeasure,
    eta: &MixingMeasure,
    diff: &SignedAtoms,
    extent: f64,
    _mass: f64,
    spec: &QuadratureSpec,
) -> Result<Raw> {
    let d = pi.dim();
    let m = gh_order(d, spec.node_budget.min(4_000_000));
    if m < 4 {
        return Err(Error::Unsupported(String::from("node budget too small for tensor Gauss-Hermite")));
    }
    let scale = 1.0 + 0.5 * extent;
    let eval = |x: &[f64]| -> f64 {
        let p = mixture_density(pi, x).unwrap_or(0.0);
        let q = mixture_density(eta, x).unwrap_or(0.0);
        let dd = diff.density(x);
        let phi = crate::mixtures::phi_d(x);
        integrand.value(Triple { p, q, d: dd }, phi)
    };
    let coarse_m = (3 * m / 4).max(2);
    let fine = tensor_gh(d, m, scale, eval);
    let coarse = tensor_gh(d, coarse_m, scale, eval);
    let evals = libm::pow(m as f64, d as f64) as usize + libm::pow(coarse_m as f64, d as f64) as usize;
    Ok(Raw { value: fine.max(0.0), error: (fine - coarse).abs(), evals, converged: true, heuristic: true })
}

fn finish(raw: Raw) -> DivergenceResult {
    DivergenceResult {
        value: raw.value.max(0.0),
        error_bound: raw.error,
        nodes_used: raw.evals,
        converged: raw.converged,
        heuristic: raw.heuristic,
    }
}

/// Square root with first-order error propagation.
fn sqrt_result(r: DivergenceResult) -> DivergenceResult {
    let v = sqrt(r.value);
    let err = if v > 0.0 { (r.error_bound / (2.0 * v)).min(sqrt(r.error_bound)) } else { sqrt(r.error_bound) };
    DivergenceResult { value: v, error_bound: err, ..r }
}

pub fn divergence(kind: DivergenceKind, pi: &MixingMeasure, eta: &MixingMeasure, quad: &QuadratureSpec) -> Result<DivergenceResult> {
    let integrand = match kind {
        DivergenceKind::Tv => Integrand::Tv,
        DivergenceKind::H | DivergenceKind::H2 => Integrand::H2,
        DivergenceKind::Chi2 => Integrand::Chi2,
        DivergenceKind::Kl => Integrand::Kl,
    };
    let r = finish(integrate_pair(integrand, pi, eta, quad)?);
    Ok(if kind == DivergenceKind::H { sqrt_result(r) } else { r })
}

/// `‖g‖_{L^p(φ_d)}` for `p ∈ {1, 2}`.
pub fn phi_norm(pi: &MixingMeasure, eta: &MixingMeasure, p: u32, quad: &QuadratureSpec) -> Result<DivergenceResult> {
    match p {
        1 => Ok(finish(integrate_pair(Integrand::AbsDiff, pi, eta, quad)?)),
        2 => Ok(sqrt_result(finish(integrate_pair(Integrand::SqOverPhi, pi, eta, quad)?))),
        _ => Err(domain("p", p as f64)),
    }
}

/// `∫ |f| φ_d` for a function on `R^d`, used for polynomial norms.
pub fn phi_weighted_abs<F: Fn(&[f64]) -> f64>(d: usize, f: F, quad: &QuadratureSpec) -> Result<DivergenceResult> {
    quad.validate()?;
    struct Line<'f, F: Fn(&[f64]) -> f64> {
        f: &'f F,
        point: Vec<f64>,
        axis: usize,
    }
    impl<F: Fn(&[f64]) -> f64> PairSlice for Line<'_, F> {
        fn eval(&mut self, x: f64) -> Triple {
            self.point[self.axis] = x;
            let w: f64 = self.point.iter().map(|v| normal_pdf(*v)).product();
            Triple { p: 0.0, q: 0.0, d: (self.f)(&self.point) * w }
        }
    }
    let r = quad.truncation_radius.unwrap_or(quad.default_radius(0.0) + 4.0);
    match d {
        0 => Err(domain("d", 0.0)),
        1 => {
            let mut line = Line { f: &f, point: vec![0.0], axis: 0 };
            let res = line_integral(Integrand::AbsDiff, &mut line, -r, r, Some(0.01), quad.tolerance());
            Ok(DivergenceResult {
                value: res.value,
                error_bound: res.error,
                nodes_used: res.evals,
                converged: res.converged,
                heuristic: true,
            })
        }
        2 => {
            let mut line = Line { f: &f, point: vec![0.0, 0.0], axis: 1 };
            let raw = nested_2d_core(&mut |x1, l: &mut Line<F>| l.point[0] = x1, &mut line, Integrand::AbsDiff, r, 0.0, quad);
            Ok(DivergenceResult { heuristic: true, ..finish(raw) })
        }
        _ => {
            let m = gh_order(d, quad.node_budget.min(4_000_000));
            let fine = tensor_gh(d, m, 1.0, |x| f(x).abs() * crate::mixtures::phi_d(x));
            let coarse = tensor_gh(d, (3 * m / 4).max(2), 1.0, |x| f(x).abs() * crate::mixtures::phi_d(x));
            Ok(DivergenceResult {
                value: fine,
                error_bound: (fine - coarse).abs(),
                nodes_used: libm::pow(m as f64, d as f64) as usize,
                converged: true,
                heuristic: true,
            })
        }
    }
}

/// Translated-L² envelope of χ² together with its maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslateBound {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub evaluated: usize,
}

/// `∫ (f_π − f_η)²/φ_d(x − θ) dx = Σ_{j,k} c_j c_k e^{⟨θ_j − θ, θ_k − θ⟩}`.
pub fn translated_l2(diff: &SignedAtoms, theta: &[f64]) -> f64 {
    let n = diff.len();
    let shifted: Vec<Vec<f64>> = (0..n).map(|j| diff.atom(j).iter().zip(theta).map(|(a, t)| a - t).collect()).collect();
    let mut acc = Compensated::new();
    for j in 0..n {
        for k in 0..n {
            let ip: f64 = shifted[j].iter().zip(&shifted[k]).map(|(a, b)| a * b).sum();
            acc.add(diff.coefs()[j] * diff.coefs()[k] * exp(ip));
        }
    }
    acc.value().max(0.0)
}

/// Grid maximum of [`translated_l2`] over `[−M, M]^d`, `d ≤ 2`.
///
/// The grid always contains the atoms of `η`; averaging the translated
/// integral over `η` already dominates χ², so the maximum does too.
pub fn chi2_translate_bound(pi: &MixingMeasure, eta: &MixingMeasure, quad: &QuadratureSpec) -> Result<TranslateBound> {
    check_pair(pi, eta)?;
    let d = pi.dim();
    if d > 2 {
        return Err(Error::Unsupported(String::from("translate bound search supports d <= 2")));
    }
    let diff = SignedAtoms::difference(pi, eta)?;
    let m_rad = pi.radius().max(eta.radius());
    let per_axis = 41usize;
    let total = libm::pow(per_axis as f64, d as f64) as usize + eta.len() + pi.len();
    if total > quad.node_budget {
        return Err(Error::Unsupported(String::from("translate bound grid exceeds the node budget")));
    }
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(total);
    let axis: Vec<f64> = (0..per_axis).map(|i| -m_rad + 2.0 * m_rad * i as f64 / (per_axis - 1) as f64).collect();
    if d == 1 {
        candidates.extend(axis.iter().map(|&a| vec![a]));
    } else {
        for &a in &axis {
            for &b in &axis {
                candidates.push(vec![a, b]);
            }
        }
    }
    candidates.extend((0..eta.len()).map(|j| eta.atom(j).to_vec()));
    candidates.extend((0..pi.len()).map(|j| pi.atom(j).to_vec()));
    let mut best = TranslateBound { value: 0.0, argmax: vec![0.0; d], evaluated: 0 };
    for c in candidates {
        let v = translated_l2(&diff, &c);
        best.evaluated += 1;
        if v > best.value {
            best.value = v;
            best.argmax = c;
        }
    }
    Ok(best)
}
