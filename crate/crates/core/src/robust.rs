//! Huber contamination, TV coverings of bounded mixtures, the Yatracos
//! minimum-distance estimator and the two-point lower-bound construction.
//!
//! In one dimension every Yatracos set `A_ij = {f_i ≥ f_j}` is stored as an
//! exact union of intervals, so candidate probabilities are sums of normal
//! masses. In two dimensions the sets stay implicit and probabilities come
//! from a Riemann grid, which makes that path a heuristic.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{ceil, exp, log, pow, sqrt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::bounds::{compute_c0, ln_j_transfer, random_measure};
use crate::divergences::{divergence, DivergenceKind, QuadratureSpec};
use crate::error::{domain, Error, Result};
use crate::hermite::series_roots;
use crate::mixtures::{mixture_density, phi_d, MixingMeasure};
use crate::precision::{PrecisionRequest, Tier};
use crate::quad::{integrate, Tolerance};
use crate::sharpness::{digits_lost, verify_sharpness, SharpnessReport, Stage};
use crate::special::{binomial, illinois, normal_mass, normal_pdf};

/// Root scan step for `f_i − f_j` in one dimension.
const SCAN_STEP: f64 = 0.02;
/// The scan covers `[−M − SCAN_PAD, M + SCAN_PAD]`.
const SCAN_PAD: f64 = 10.0;
/// Riemann step and padding of the two-dimensional probability grid.
const PLANE_STEP: f64 = 0.2;
const PLANE_PAD: f64 = 6.0;
const CALIBRATION_SEED: u64 = 0x7961_7472_6163_6f73;
const CALIBRATION_DRAWS: [usize; 2] = [200, 60];
const CALIBRATION_MAX_ATOMS: usize = 5;

/// Distribution of the outliers.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Contamination {
    /// Every outlier sits exactly at `at`.
    PointMass { at: Vec<f64> },
    /// Uniform on the box `[lo, hi]^d`.
    Uniform { lo: f64, hi: f64 },
    /// The clean mixture translated by `shift` along the first axis.
    AdversarialShiftedMixture { shift: f64 },
}

/// The three default samplers, instantiated for a radius and dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ContaminationKind {
    /// Point mass at `3M` on the first axis.
    #[default]
    PointMass,
    /// Uniform on `[−5M, 5M]^d`.
    Uniform,
    /// Clean mixture shifted by `M`.
    AdversarialShiftedMixture,
}

impl ContaminationKind {
    pub fn instantiate(self, m: f64, d: usize) -> Contamination {
        match self {
            ContaminationKind::PointMass => {
                let mut at = vec![0.0; d];
                at[0] = 3.0 * m;
                Contamination::PointMass { at }
            }
            ContaminationKind::Uniform => Contamination::Uniform { lo: -5.0 * m, hi: 5.0 * m },
            ContaminationKind::AdversarialShiftedMixture => Contamination::AdversarialShiftedMixture { shift: m },
        }
    }
}

/// `(1−ε) f_π + ε Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationModel {
    clean: MixingMeasure,
    epsilon: f64,
    contamination: Contamination,
}

impl ContaminationModel {
    pub fn new(clean: MixingMeasure, epsilon: f64, contamination: Contamination) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(domain("epsilon", epsilon));
        }
        match &contamination {
            Contamination::PointMass { at } => {
                if at.len() != clean.dim() {
                    return Err(Error::DimensionMismatch { left: clean.dim(), right: at.len() });
                }
            }
            Contamination::Uniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(domain("uniform upper end", *hi));
                }
            }
            Contamination::AdversarialShiftedMixture { shift } => {
                if !shift.is_finite() {
                    return Err(domain("shift", *shift));
                }
            }
        }
        Ok(Self { clean, epsilon, contamination })
    }

    pub fn clean(&self) -> &MixingMeasure {
        &self.clean
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn contamination(&self) -> &Contamination {
        &self.contamination
    }

    pub fn dim(&self) -> usize {
        self.clean.dim()
    }

    /// `n` draws as a flat `n × d` list.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            let outlier = self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon;
            if !outlier {
                draw_mixture(&self.clean, 0.0, rng, &mut out);
                continue;
            }
            match &self.contamination {
                Contamination::PointMass { at } => out.extend_from_slice(at),
                Contamination::Uniform { lo, hi } => {
                    for _ in 0..d {
                        out.push(lo + (hi - lo) * rng.random::<f64>());
                    }
                }
                Contamination::AdversarialShiftedMixture { shift } => draw_mixture(&self.clean, *shift, rng, &mut out),
            }
        }
        out
    }

    /// `P(A)` for a union of intervals, in one dimension.
    pub fn probability(&self, intervals: &[(f64, f64)]) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(String::from("exact set probabilities need d = 1")));
        }
        let clean = mixture_mass(&self.clean, intervals, 0.0);
        let outlier = match &self.contamination {
            Contamination::PointMass { at } => {
                let x = at[0];
                if intervals.iter().any(|&(a, b)| a <= x && x < b) {
                    1.0
                } else {
                    0.0
                }
            }
            Contamination::Uniform { lo, hi } => {
                let covered: f64 = intervals.iter().map(|&(a, b)| (b.min(*hi) - a.max(*lo)).max(0.0)).sum();
                covered / (hi - lo)
            }
            Contamination::AdversarialShiftedMixture { shift } => mixture_mass(&self.clean, intervals, *shift),
        };
        Ok((1.0 - self.epsilon) * clean + self.epsilon * outlier)
    }
}

fn draw_mixture<R: Rng + ?Sized>(mix: &MixingMeasure, shift: f64, rng: &mut R, out: &mut Vec<f64>) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = mix.len() - 1;
    for (j, w) in mix.weights().iter().enumerate() {
        acc += w;
        if u < acc {
            pick = j;
            break;
        }
    }
    for (i, t) in mix.atom(pick).iter().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        out.push(t + z + if i == 0 { shift } else { 0.0 });
    }
}

/// Seeded draws from the contaminated model.
pub fn sample_contaminated(model: &ContaminationModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(domain("n", 0.0));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(model.sample(&mut rng, n))
}

/// `P_{f_π}` of a union of intervals, with every atom shifted by `shift`.
pub fn mixture_mass(mix: &MixingMeasure, intervals: &[(f64, f64)], shift: f64) -> f64 {
    let mut total = 0.0;
    for (w, t) in mix.weights().iter().zip(mix.atoms_flat()) {
        let c = t + shift;
        for &(a, b) in intervals {
            total += w * normal_mass(a - c, b - c);
        }
    }
    total
}

/// One Yatracos set `A_ij = {f_i ≥ f_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct YatracosSet {
    pub i: usize,
    pub j: usize,
    /// Disjoint ascending intervals in one dimension; `None` when implicit.
    pub intervals: Option<Vec<(f64, f64)>>,
}

/// Riemann grid used for `d = 2`.
#[derive(Debug, Clone, PartialEq)]
struct Plane {
    points: Vec<[f64; 2]>,
    area: f64,
    /// Candidate densities, `N × points`.
    densities: Vec<f64>,
}

/// A finite TV covering of the bounded mixtures together with its Yatracos class.
#[derive(Debug, Clone, PartialEq)]
pub struct YatracosCovering {
    d: usize,
    m: f64,
    candidates: Vec<MixingMeasure>,
    eta: f64,
    eta_actual: f64,
    covering_radius: f64,
    level: u32,
    max_atoms: usize,
    sets: Vec<YatracosSet>,
    /// `P_k(A_s)` row-major, `N × S`.
    probs: Vec<f64>,
    plane: Option<Plane>,
}

impl YatracosCovering {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> f64 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[MixingMeasure] {
        &self.candidates
    }

    /// Requested radius.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Achieved resolution: the larger of the neighbour spacing and the covering radius.
    pub fn eta_actual(&self) -> f64 {
        self.eta_actual
    }

    /// Largest grid-TV distance from a random calibration mixture to its nearest candidate.
    pub fn covering_radius(&self) -> f64 {
        self.covering_radius
    }

    pub fn eta_met(&self) -> bool {
        self.eta_actual <= self.eta
    }

    /// Grid refinement `r`: `r + 1` points per axis and weights in multiples of `1/(r+1)`.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn max_atoms(&self) -> usize {
        self.max_atoms
    }

    /// One stored set per unordered pair; `A_ji` is its complement up to ties.
    pub fn sets(&self) -> &[YatracosSet] {
        &self.sets
    }

    /// `|𝒜| = N(N−1)` over ordered pairs.
    pub fn family_size(&self) -> usize {
        let n = self.len();
        (n * n.saturating_sub(1)).max(1)
    }

    pub fn probability(&self, k: usize, s: usize) -> f64 {
        self.probs[k * self.sets.len() + s]
    }

    /// `P̂_n(A_s)` for every set; `samples` is a flat `n × d` list.
    pub fn empirical(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.is_empty() || samples.len() % self.d != 0 {
            return Err(Error::InvalidMeasure(format!("{} coordinates do not form points in dimension {}", samples.len(), self.d)));
        }
        let n = samples.len() / self.d;
        let inv = 1.0 / n as f64;
        if self.d == 1 {
            let mut sorted = samples.to_vec();
            sorted.sort_by(f64::total_cmp);
            let below = |x: f64| sorted.partition_point(|&s| s < x);
            return Ok(self
                .sets
                .iter()
                .map(|set| {
                    let count: usize = set.intervals.as_deref().unwrap_or(&[]).iter().map(|&(a, b)| below(b) - below(a)).sum();
                    count as f64 * inv
                })
                .collect());
        }
        let mut counts = vec![0usize; self.sets.len()];
        let mut dens = vec![0.0; self.len()];
        for x in samples.chunks(self.d) {
            for (slot, c) in dens.iter_mut().zip(&self.candidates) {
                *slot = mixture_density(c, x)?;
            }
            for (count, set) in counts.iter_mut().zip(&self.sets) {
                if dens[set.i] >= dens[set.j] {
                    *count += 1;
                }
            }
        }
        Ok(counts.iter().map(|&c| c as f64 * inv).collect())
    }

    /// `dist(Q_k, P̂_n) = max_s |Q_k(A_s) − P̂_n(A_s)|` from precomputed frequencies.
    pub fn dist_to_empirical(&self, k: usize, empirical: &[f64]) -> f64 {
        let row = &self.probs[k * self.sets.len()..(k + 1) * self.sets.len()];
        row.iter().zip(empirical).fold(0.0, |acc, (p, e)| acc.max((p - e).abs()))
    }

    /// `dist(Q_i, Q_j)`.
    pub fn dist_between(&self, i: usize, j: usize) -> f64 {
        let s = self.sets.len();
        let (a, b) = (&self.probs[i * s..(i + 1) * s], &self.probs[j * s..(j + 1) * s]);
        a.iter().zip(b).fold(0.0, |acc, (p, q)| acc.max((p - q).abs()))
    }

    /// `dist` between two arbitrary probability vectors over the class.
    pub fn dist_vectors(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |acc, (p, q)| acc.max((p - q).abs()))
    }

    /// `P_{f_π}(A_s)` for any mixture: exact in one dimension, grid in two.
    pub fn set_probability(&self, mix: &MixingMeasure, s: usize) -> Result<f64> {
        if mix.dim() != self.d {
            return Err(Error::DimensionMismatch { left: self.d, right: mix.dim() });
        }
        let set = &self.sets[s];
        match (&set.intervals, &self.plane) {
            (Some(iv), _) => Ok(mixture_mass(mix, iv, 0.0)),
            (None, Some(plane)) => {
                let n = plane.points.len();
                let (di, dj) = (&plane.densities[set.i * n..], &plane.densities[set.j * n..]);
                let mut total = 0.0;
                for (p, x) in plane.points.iter().enumerate() {
                    if di[p] >= dj[p] {
                        total += mixture_density(mix, x)?;
                    }
                }
                Ok(total * plane.area)
            }
            (None, None) => Err(Error::Unsupported(String::from("set without a representation"))),
        }
    }

    /// Index of the minimum-distance candidate; ties go to the smallest index.
    pub fn estimate_index(&self, samples: &[f64]) -> Result<usize> {
        let emp = self.empirical(samples)?;
        Ok(self.argmin(&emp))
    }

    fn argmin(&self, emp: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for k in 0..self.len() {
            let v = self.dist_to_empirical(k, emp);
            if v < best.1 {
                best = (k, v);
            }
        }
        best.0
    }
}

/// The minimum-distance estimate over the covering.
pub fn yatracos_estimate(samples: &[f64], covering: &YatracosCovering) -> Result<MixingMeasure> {
    Ok(covering.candidates[covering.estimate_index(samples)?].clone())
}

/// Hoeffding radius `√(2(ln(2|𝒜|) + ln(1/γ))/n)` exceeded by `dist(P, P̂_n)` with probability at most `γ`.
pub fn hoeffding_radius(family_size: usize, n: usize, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(domain("gamma", gamma));
    }
    if n == 0 {
        return Err(domain("n", 0.0));
    }
    Ok(sqrt(2.0 * (log(2.0 * family_size as f64) + log(1.0 / gamma)) / n as f64))
}

/// Atom count `⌈ln^d(1/η)⌉`, at least one.
pub fn atom_budget(eta: f64, d: usize) -> usize {
    let l = log(1.0 / eta).max(1.0);
    (ceil(pow(l, d as f64)) as usize).max(1)
}

/// Number of candidates at refinement `r`: `Σ_k C(cells, k) C(r, k−1)`.
pub fn candidate_count(level: u32, d: usize, max_atoms: usize) -> u128 {
    let cells = pow(level as f64 + 1.0, d as f64) as u64;
    let parts = level as u64 + 1;
    let mut total: u128 = 0;
    for k in 1..=(max_atoms as u64).min(cells).min(parts) {
        total = total.saturating_add(binomial(cells, k).saturating_mul(binomial(parts - 1, k - 1)));
    }
    total
}

/// Builds the grid covering of `[−M, M]^d` mixtures, refining until
/// neighbouring candidates are within `eta` in TV and random mixtures lie
/// within `eta` of some candidate, or the next level would exceed `budget`.
pub fn build_covering(m: f64, d: usize, eta: f64, budget: usize) -> Result<YatracosCovering> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(domain("M", m));
    }
    if !(1..=2).contains(&d) {
        return Err(Error::Unsupported(format!("coverings need d in {{1, 2}}, got {d}")));
    }
    if !(eta > 0.0) {
        return Err(domain("eta", eta));
    }
    let max_atoms = atom_budget(eta, d);
    let frame = Frame::new(m, d);
    let calibration = calibration_measures(m, d)?;
    let calib_dens: Vec<Vec<f64>> = calibration.iter().map(|mix| frame.densities(mix)).collect::<Result<_>>()?;

    let mut best: Option<(u32, Vec<MixingMeasure>, Vec<Vec<f64>>, f64, f64)> = None;
    for level in 0u32.. {
        if candidate_count(level, d, max_atoms) > budget as u128 && best.is_some() {
            break;
        }
        let cands = grid_candidates(m, d, level, max_atoms)?;
        let dens: Vec<Vec<f64>> = cands.iter().map(|c| frame.densities(c)).collect::<Result<_>>()?;
        let mut radius: f64 = 0.0;
        for cd in &calib_dens {
            let nearest = dens.iter().map(|row| frame.tv(row, cd)).fold(f64::INFINITY, f64::min);
            radius = radius.max(nearest);
        }
        let spacing = neighbour_spacing(&frame, &dens);
        let achieved = spacing.max(radius);
        best = Some((level, cands, dens, achieved, radius));
        if achieved <= eta {
            break;
        }
    }
    let (level, candidates, dens, eta_actual, covering_radius) = best.expect("level 0 is always built");
    let mut cover = YatracosCovering {
        d,
        m,
        candidates,
        eta,
        eta_actual,
        covering_radius,
        level,
        max_atoms,
        sets: Vec::new(),
        probs: Vec::new(),
        plane: None,
    };
    if d == 1 {
        build_interval_sets(&mut cover, &frame, &dens)?;
    } else {
        build_plane_sets(&mut cover, &frame, dens);
    }
    Ok(cover)
}

/// Evaluation grid: the root-scan line for `d = 1`, the Riemann plane for `d = 2`.
struct Frame {
    d: usize,
    points: Vec<f64>,
    cell: f64,
}

impl Frame {
    fn new(m: f64, d: usize) -> Self {
        if d == 1 {
            let hi = m + SCAN_PAD;
            let steps = ceil(2.0 * hi / SCAN_STEP) as usize;
            let h = 2.0 * hi / steps as f64;
            let points = (0..=steps).map(|i| -hi + h * i as f64).collect();
            Self { d, points, cell: h }
        } else {
            let hi = m + PLANE_PAD;
            let steps = ceil(2.0 * hi / PLANE_STEP) as usize;
            let h = 2.0 * hi / steps as f64;
            let mut points = Vec::with_capacity(2 * (steps + 1) * (steps + 1));
            for i in 0..=steps {
                for j in 0..=steps {
                    points.push(-hi + h * i as f64);
                    points.push(-hi + h * j as f64);
                }
            }
            Self { d, points, cell: h * h }
        }
    }

    fn densities(&self, mix: &MixingMeasure) -> Result<Vec<f64>> {
        self.points.chunks(self.d).map(|x| mixture_density(mix, x)).collect()
    }

    /// Riemann TV between two density rows.
    fn tv(&self, a: &[f64], b: &[f64]) -> f64 {
        0.5 * self.cell * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }
}

/// `max_k min_{l≠k} TV(Q_k, Q_l)` over up to 300 evenly spread candidates; 0 for one candidate.
fn neighbour_spacing(frame: &Frame, dens: &[Vec<f64>]) -> f64 {
    let n = dens.len();
    if n < 2 {
        return 0.0;
    }
    let stride = n.div_ceil(300);
    let mut worst: f64 = 0.0;
    for k in (0..n).step_by(stride) {
        let nearest = (0..n).filter(|&l| l != k).map(|l| frame.tv(&dens[k], &dens[l])).fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    worst
}

fn calibration_measures(m: f64, d: usize) -> Result<Vec<MixingMeasure>> {
    let mut rng = ChaCha20Rng::seed_from_u64(CALIBRATION_SEED);
    let mut out = Vec::new();
    for _ in 0..CALIBRATION_DRAWS[d - 1] {
        let atoms = rng.random_range(1..=CALIBRATION_MAX_ATOMS);
        out.push(random_measure(&mut rng, d, m, atoms)?);
    }
    Ok(out)
}

/// All mixtures with at most `max_atoms` atoms on the `(r+1)^d` grid and
/// weights in positive multiples of `1/(r+1)`, ordered by atom count.
fn grid_candidates(m: f64, d: usize, level: u32, max_atoms: usize) -> Result<Vec<MixingMeasure>> {
    let axis: Vec<f64> = if level == 0 {
        vec![0.0]
    } else {
        (0..=level).map(|i| -m + 2.0 * m * i as f64 / level as f64).collect()
    };
    let g = axis.len();
    let cells = pow(g as f64, d as f64) as usize;
    let parts = level as usize + 1;
    let coords = |cell: usize| -> Vec<f64> {
        let mut c = Vec::with_capacity(d);
        let mut rest = cell;
        for _ in 0..d {
            c.push(axis[rest % g]);
            rest /= g;
        }
        c.reverse();
        c
    };
    let mut out = Vec::new();
    for k in 1..=max_atoms.min(cells).min(parts) {
        let subsets = combinations(cells, k);
        let splits = compositions(parts, k);
        for subset in &subsets {
            let atoms: Vec<f64> = subset.iter().flat_map(|&c| coords(c)).collect();
            for split in &splits {
                let weights = split.iter().map(|&p| p as f64 / parts as f64).collect();
                out.push(MixingMeasure::new(d, m, atoms.clone(), weights)?);
            }
        }
    }
    Ok(out)
}

/// `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for t in i..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Ordered ways to write `total` as `k` positive parts.
fn compositions(total: usize, k: usize) -> Vec<Vec<usize>> {
    fn walk(rest: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(rest);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 1..=rest - (slots - 1) {
            cur.push(first);
            walk(rest - first, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    walk(total, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Exact interval unions `{f_i ≥ f_j}` and their candidate probabilities.
fn build_interval_sets(cover: &mut YatracosCovering, frame: &Frame, dens: &[Vec<f64>]) -> Result<()> {
    let n = cover.len();
    let mut sets = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let k_atoms = cover.candidates[i].len() + cover.candidates[j].len();
            let intervals = superlevel_intervals(&cover.candidates[i], &cover.candidates[j], frame, &dens[i], &dens[j], k_atoms)?;
            sets.push(YatracosSet { i, j, intervals: Some(intervals) });
        }
    }
    let s = sets.len();
    let mut probs = vec![0.0; n * s];
    for (si, set) in sets.iter().enumerate() {
        let iv = set.intervals.as_deref().unwrap_or(&[]);
        for (k, cand) in cover.candidates.iter().enumerate() {
            probs[k * s + si] = mixture_mass(cand, iv, 0.0);
        }
    }
    cover.sets = sets;
    cover.probs = probs;
    Ok(())
}

/// Intervals where `f_i − f_j ≥ 0`, from a sign scan refined by Illinois.
/// The scan step shrinks fourfold whenever the root count reaches `4K`.
fn superlevel_intervals(
    fi: &MixingMeasure,
    fj: &MixingMeasure,
    frame: &Frame,
    di: &[f64],
    dj: &[f64],
    k_atoms: usize,
) -> Result<Vec<(f64, f64)>> {
    let diff = |x: f64| -> f64 {
        let a = mixture_density(fi, &[x]).unwrap_or(0.0);
        let b = mixture_density(fj, &[x]).unwrap_or(0.0);
        a - b
    };
    let cap = 4 * k_atoms;
    let mut values: Vec<(f64, f64)> = frame.points.iter().zip(di.iter().zip(dj)).map(|(&x, (a, b))| (x, a - b)).collect();
    let mut roots;
    loop {
        roots = Vec::new();
        for w in values.windows(2) {
            let ((x0, v0), (x1, v1)) = (w[0], w[1]);
            if (v0 >= 0.0) != (v1 >= 0.0) {
                roots.push(illinois(diff, x0, x1, v0, v1, 1e-12 * (1.0 + x0.abs())));
            }
        }
        let h = values[1].0 - values[0].0;
        if roots.len() < cap || h < 1e-6 {
            break;
        }
        let (lo, hi) = (values[0].0, values[values.len() - 1].0);
        let steps = ((hi - lo) / (0.25 * h)).round() as usize;
        values = (0..=steps)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / steps as f64;
                (x, diff(x))
            })
            .collect();
    }
    let mut edges = Vec::with_capacity(roots.len() + 2);
    edges.push(f64::NEG_INFINITY);
    edges.extend_from_slice(&roots);
    edges.push(f64::INFINITY);
    let first_positive = values[0].1 >= 0.0;
    let mut out = Vec::new();
    for (t, w) in edges.windows(2).enumerate() {
        if first_positive == (t % 2 == 0) {
            out.push((w[0], w[1]));
        }
    }
    Ok(out)
}

fn build_plane_sets(cover: &mut YatracosCovering, frame: &Frame, dens: Vec<Vec<f64>>) {
    let n = cover.len();
    let points: Vec<[f64; 2]> = frame.points.chunks(2).map(|p| [p[0], p[1]]).collect();
    let np = points.len();
    let mut sets = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            sets.push(YatracosSet { i, j, intervals: None });
        }
    }
    let s = sets.len();
    let mut probs = vec![0.0; n * s];
    for (si, set) in sets.iter().enumerate() {
        let mask: Vec<usize> = (0..np).filter(|&p| dens[set.i][p] >= dens[set.j][p]).collect();
        for (k, row) in dens.iter().enumerate() {
            probs[k * s + si] = frame.cell * mask.iter().map(|&p| row[p]).sum::<f64>();
        }
    }
    let densities = dens.into_iter().flatten().collect();
    cover.sets = sets;
    cover.probs = probs;
    cover.plane = Some(Plane { points, area: frame.cell, densities });
}

/// Default clean prior of the experiments.
pub fn default_clean(m: f64) -> Result<MixingMeasure> {
    MixingMeasure::new(1, m, vec![-0.8 * m, 0.1 * m, 0.7 * m], vec![0.3, 0.45, 0.25])
}

/// Grid of a risk sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub clean: MixingMeasure,
    pub epsilons: Vec<f64>,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub contamination: Contamination,
    /// Level of the Hoeffding check.
    pub gamma: f64,
    /// Slack `δ` of the transfer function.
    pub delta: f64,
}

impl SweepConfig {
    pub fn new(clean: MixingMeasure, epsilons: Vec<f64>, ns: Vec<usize>, replicates: usize, seed: u64) -> Self {
        let contamination = ContaminationKind::PointMass.instantiate(clean.radius(), clean.dim());
        Self { clean, epsilons, ns, replicates, seed, contamination, gamma: 0.05, delta: 1.0 }
    }
}

/// One Monte-Carlo replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateRecord {
    pub epsilon: f64,
    pub n: usize,
    pub replicate: usize,
    /// Index of the selected candidate.
    pub estimate: usize,
    pub tv: f64,
    pub h2: f64,
    /// `dist(Q̂, P̂_n)`, the minimized objective.
    pub dist_objective: f64,
    /// `dist(P, P̂_n)` against the exact contaminated law.
    pub dist_truth: f64,
    /// `3η_π + 3ε + 2 dist(P, P̂_n)`.
    pub yatracos_rhs: f64,
    pub hoeffding_radius: f64,
}

impl ReplicateRecord {
    pub fn yatracos_holds(&self) -> bool {
        self.tv <= self.yatracos_rhs + 1e-9
    }

    pub fn hoeffding_holds(&self) -> bool {
        self.dist_truth <= self.hoeffding_radius
    }
}

/// Aggregates of one `(ε, n)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RiskRow {
    pub epsilon: f64,
    pub n: usize,
    pub replicates: usize,
    pub tv2_mean: f64,
    pub tv2_se: f64,
    pub h2_mean: f64,
    pub h2_se: f64,
    pub dist_mean: f64,
    pub hoeffding_radius: f64,
    pub hoeffding_violations: usize,
    pub yatracos_violations: usize,
    /// `ε² + ln^{d+1}(n)/n`.
    pub rate: f64,
    /// `2 ln 𝒥(√(mean TV²))`, the transfer prediction for the H² risk.
    pub ln_j_h2: f64,
}

/// Output of [`risk_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSweep {
    pub rows: Vec<RiskRow>,
    pub records: Vec<ReplicateRecord>,
    /// `min_k TV(f_π, Q_k)`.
    pub eta_pi: f64,
    /// `(TV, H²)` from the clean density to every candidate.
    pub candidate_divergences: Vec<(f64, f64)>,
}

impl RiskSweep {
    pub fn row(&self, epsilon: f64, n: usize) -> Option<&RiskRow> {
        self.rows.iter().find(|r| r.epsilon == epsilon && r.n == n)
    }

    /// Mean TV² strictly decreasing along `n` at this `ε`.
    pub fn decreasing_in_n(&self, epsilon: f64) -> bool {
        let curve: Vec<f64> = self.rows.iter().filter(|r| r.epsilon == epsilon).map(|r| r.tv2_mean).collect();
        curve.windows(2).all(|w| w[1] < w[0])
    }

    /// Mean TV² increasing in `ε` at the largest `n`.
    pub fn plateau_ordered(&self) -> bool {
        let n_max = self.rows.iter().map(|r| r.n).max().unwrap_or(0);
        let mut plateau: Vec<(f64, f64)> = self.rows.iter().filter(|r| r.n == n_max).map(|r| (r.epsilon, r.tv2_mean)).collect();
        plateau.sort_by(|a, b| a.0.total_cmp(&b.0));
        plateau.windows(2).all(|w| w[1].1 > w[0].1)
    }

    /// Mean TV² nondecreasing in `ε` at every `n`, allowing two standard errors.
    pub fn monotone_in_epsilon(&self) -> bool {
        let mut ns: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns.iter().all(|&n| {
            let mut cells: Vec<&RiskRow> = self.rows.iter().filter(|r| r.n == n).collect();
            cells.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
            cells.windows(2).all(|w| w[1].tv2_mean >= w[0].tv2_mean - 2.0 * sqrt(w[0].tv2_se * w[0].tv2_se + w[1].tv2_se * w[1].tv2_se))
        })
    }

    /// `C = mean TV² / ε²` at the largest `n` for each `ε > 0`.
    pub fn plateau_constants(&self) -> Vec<(f64, f64)> {
        let n_max = self.rows.iter().map(|r| r.n).max().unwrap_or(0);
        self.rows.iter().filter(|r| r.n == n_max && r.epsilon > 0.0).map(|r| (r.epsilon, r.tv2_mean / (r.epsilon * r.epsilon))).collect()
    }
}

/// Stream index of replicate `r` in cell `(e, n)`.
pub fn replicate_stream(e: usize, n: usize, r: usize) -> u64 {
    ((e as u64) << 40) | ((n as u64) << 20) | r as u64
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var / n))
}

/// Monte-Carlo TV² and H² risk of the Yatracos estimate over an `(ε, n)` grid.
pub fn risk_sweep(config: &SweepConfig, covering: &YatracosCovering, quad: &QuadratureSpec) -> Result<RiskSweep> {
    let d = covering.dim();
    if d != 1 || config.clean.dim() != 1 {
        return Err(Error::Unsupported(String::from("risk sweeps need d = 1")));
    }
    if config.replicates == 0 {
        return Err(domain("replicates", 0.0));
    }
    let m = covering.radius();
    let candidate_divergences: Vec<(f64, f64)> = covering
        .candidates()
        .iter()
        .map(|c| {
            let tv = divergence(DivergenceKind::Tv, &config.clean, c, quad)?.value;
            let h2 = divergence(DivergenceKind::H2, &config.clean, c, quad)?.value;
            Ok((tv, h2))
        })
        .collect::<Result<_>>()?;
    let eta_pi = candidate_divergences.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let bc = compute_c0(config.delta, m, d)?;

    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (ei, &eps) in config.epsilons.iter().enumerate() {
        let model = ContaminationModel::new(config.clean.clone(), eps, config.contamination.clone())?;
        let truth: Vec<f64> = covering
            .sets()
            .iter()
            .map(|s| model.probability(s.intervals.as_deref().unwrap_or(&[])))
            .collect::<Result<_>>()?;
        for (ni, &n) in config.ns.iter().enumerate() {
            let radius = hoeffding_radius(covering.family_size(), n, config.gamma)?;
            let mut cell = Vec::with_capacity(config.replicates);
            for r in 0..config.replicates {
                let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
                rng.set_stream(replicate_stream(ei, ni, r));
                let samples = model.sample(&mut rng, n);
                let emp = covering.empirical(&samples)?;
                let k = covering.argmin(&emp);
                let dist_truth = YatracosCovering::dist_vectors(&truth, &emp);
                let (tv, h2) = candidate_divergences[k];
                cell.push(ReplicateRecord {
                    epsilon: eps,
                    n,
                    replicate: r,
                    estimate: k,
                    tv,
                    h2,
                    dist_objective: covering.dist_to_empirical(k, &emp),
                    dist_truth,
                    yatracos_rhs: 3.0 * eta_pi + 3.0 * eps + 2.0 * dist_truth,
                    hoeffding_radius: radius,
                });
            }
            let tv2: Vec<f64> = cell.iter().map(|c| c.tv * c.tv).collect();
            let h2: Vec<f64> = cell.iter().map(|c| c.h2).collect();
            let dists: Vec<f64> = cell.iter().map(|c| c.dist_truth).collect();
            let (tv2_mean, tv2_se) = mean_se(&tv2);
            let (h2_mean, h2_se) = mean_se(&h2);
            let t = sqrt(tv2_mean);
            let ln_j_h2 = if t > 0.0 && t < 1.0 { 2.0 * ln_j_transfer(t, &bc)? } else { f64::NEG_INFINITY };
            rows.push(RiskRow {
                epsilon: eps,
                n,
                replicates: config.replicates,
                tv2_mean,
                tv2_se,
                h2_mean,
                h2_se,
                dist_mean: mean_se(&dists).0,
                hoeffding_radius: radius,
                hoeffding_violations: cell.iter().filter(|c| !c.hoeffding_holds()).count(),
                yatracos_violations: cell.iter().filter(|c| !c.yatracos_holds()).count(),
                rate: eps * eps + pow(log(n as f64), (d + 1) as f64) / n as f64,
                ln_j_h2,
            });
            records.extend(cell);
        }
    }
    Ok(RiskSweep { rows, records, eta_pi, candidate_divergences })
}

/// Output of [`two_point_lower_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointReport {
    pub epsilon: f64,
    pub d: usize,
    /// Sharp-family index of the selected pair.
    pub n: u32,
    pub tv: f64,
    pub h: f64,
    /// `(1−ε)/ε`.
    pub scale: f64,
    /// Weight `1 − (1−ε)TV/ε` of the common Gaussian part of `Q₁`, `Q₂`.
    pub residual_weight: f64,
    /// `∫ D⁺` and `∫ D⁻` by quadrature.
    pub positive_part: f64,
    pub negative_part: f64,
    pub q1_mass: f64,
    pub q2_mass: f64,
    /// Smallest grid value of `q₁` and `q₂`.
    pub q_min: f64,
    /// `sup_grid |(1−ε)p₁ + εq₁ − (1−ε)p₂ − εq₂|`.
    pub coincidence_error: f64,
    /// TV and H of the lifted `d`-dimensional pair, when the lift was integrated.
    pub tv_lifted: Option<f64>,
    pub h_lifted: Option<f64>,
    /// Tolerance the lifted values are compared with.
    pub lift_tolerance: f64,
    /// `H²/2`.
    pub half_h2: f64,
    /// `ε^{2(1 − 0.33/ln ln(1/ε))}`.
    pub rate_term: f64,
    pub sharp: SharpnessReport,
}

impl TwoPointReport {
    pub fn lift_preserved(&self) -> Option<bool> {
        match (self.tv_lifted, self.h_lifted) {
            (Some(tv), Some(h)) => Some((tv - self.tv).abs() <= self.lift_tolerance * self.tv && (h - self.h).abs() <= self.lift_tolerance * self.h),
            _ => None,
        }
    }

    pub fn masses_valid(&self, tol: f64) -> bool {
        self.q_min >= 0.0 && (self.q1_mass - 1.0).abs() <= tol && (self.q2_mass - 1.0).abs() <= tol
    }
}

/// Two contaminated laws that coincide although their clean parts are the
/// sharp pair with `TV ≤ ε/(1−ε)`, lifted to `d` dimensions with point masses.
///
/// The sharp family is searched over odd `n` from 11 to `n_max`; the first fit
/// has the largest H because both TV and H decrease along the family.
pub fn two_point_lower_bound(epsilon: f64, n_max: u32, m: f64, d: usize, quad: &QuadratureSpec) -> Result<TwoPointReport> {
    if !(epsilon > 0.0 && epsilon < exp(-1.0)) {
        return Err(domain("epsilon", epsilon));
    }
    if !(1..=2).contains(&d) {
        return Err(Error::Unsupported(format!("lower-bound lifts need d in {{1, 2}}, got {d}")));
    }
    let limit = epsilon / (1.0 - epsilon);
    let mut chosen = None;
    let mut n = 11;
    while n <= n_max {
        let report = verify_sharpness(n, m, PrecisionRequest::Auto, quad)?;
        if report.example.tv_n <= limit * (1.0 + 1e-12) {
            chosen = Some(report);
            break;
        }
        n += 2;
    }
    let sharp = chosen.ok_or(Error::NoSharpExample { limit })?;
    let ex = &sharp.example;
    let tv = ex.tv_n;
    let h = ex.h_n;
    let scale = (1.0 - epsilon) / epsilon;
    let residual_weight = (1.0 - scale * tv).max(0.0);
    let d1 = |x: f64| ex.difference(Stage::Mixing, x);

    // positive and negative parts of D between the sign changes of g
    let mut breaks = vec![-(m + 14.0)];
    breaks.extend(series_roots(&ex.g_series).into_iter().filter(|r| r.abs() < m + 14.0));
    breaks.push(m + 14.0);
    let tol = Tolerance { abs: 1e-13 * tv, rel: 1e-11, ..Tolerance::default() };
    let positive_part = integrate(|x| d1(x).max(0.0), &breaks, tol).value;
    let negative_part = integrate(|x| (-d1(x)).max(0.0), &breaks, tol).value;
    let q1_mass = scale * negative_part + residual_weight;
    let q2_mass = scale * positive_part + residual_weight;

    let eta_lift = ex.lift2.1.lift_with_zeros(d - 1)?;
    let pi_lift = ex.lift2.0.lift_with_zeros(d - 1)?;
    let grid = coincidence_grid(d);
    let mut coincidence_error: f64 = 0.0;
    let mut q_min = f64::INFINITY;
    for x in grid.chunks(d) {
        let rest: f64 = x[1..].iter().map(|&v| normal_pdf(v)).product();
        let diff = d1(x[0]) * rest;
        let p2 = mixture_density(&eta_lift, x)?;
        let p1 = p2 + diff;
        let q1 = scale * (-diff).max(0.0) + residual_weight * phi_d(x);
        let q2 = scale * diff.max(0.0) + residual_weight * phi_d(x);
        q_min = q_min.min(q1).min(q2);
        let lhs = (1.0 - epsilon) * p1 + epsilon * q1;
        let rhs = (1.0 - epsilon) * p2 + epsilon * q2;
        coincidence_error = coincidence_error.max((lhs - rhs).abs());
    }

    // the lifted pair is integrated directly in double when enough digits survive
    let lost = digits_lost(&ex.weights_w, ex.g_norm_l1);
    let usable = Tier::Double.digits() - lost;
    let (tv_lifted, h_lifted, lift_tolerance) = if usable >= 6.0 {
        let lift_quad = QuadratureSpec { abs_tol: 1e-9 * tv, rel_tol: 1e-7, ..*quad };
        let tvl = divergence(DivergenceKind::Tv, &pi_lift, &eta_lift, &lift_quad)?;
        let h2l = divergence(DivergenceKind::H2, &pi_lift, &eta_lift, &QuadratureSpec { abs_tol: 1e-9 * h * h, ..lift_quad })?;
        let noise = pow(10.0, -usable);
        let tol = (10.0 * (tvl.error_bound / tv + h2l.error_bound / (h * h)) + noise).max(1e-6);
        (Some(tvl.value), Some(sqrt(h2l.value)), tol)
    } else {
        (None, None, f64::NAN)
    };

    let ll = log(log(1.0 / epsilon)).max(1.0);
    let rate_term = pow(epsilon, 2.0 * (1.0 - 0.33 / ll));
    Ok(TwoPointReport {
        epsilon,
        d,
        n: ex.n,
        tv,
        h,
        scale,
        residual_weight,
        positive_part,
        negative_part,
        q1_mass,
        q2_mass,
        q_min,
        coincidence_error,
        tv_lifted,
        h_lifted,
        lift_tolerance,
        half_h2: 0.5 * h * h,
        rate_term,
        sharp,
    })
}

fn coincidence_grid(d: usize) -> Vec<f64> {
    if d == 1 {
        (0..=480).map(|i| -12.0 + 0.05 * i as f64).collect()
    } else {
        let axis: Vec<f64> = (0..=64).map(|i| -8.0 + 0.25 * i as f64).collect();
        let mut out = Vec::with_capacity(2 * axis.len() * axis.len());
        for &a in &axis {
            for &b in &axis {
                out.push(a);
                out.push(b);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cover(eta: f64) -> YatracosCovering {
        build_covering(1.0, 1, eta, 400).unwrap()
    }

    #[test]
    fn enumeration_counts_agree() {
        for level in 0..5 {
            let cands = grid_candidates(1.0, 1, level, 3).unwrap();
            assert_eq!(cands.len() as u128, candidate_count(level, 1, 3));
        }
        assert_eq!(compositions(4, 2), vec![vec![1, 3], vec![2, 2], vec![3, 1]]);
        assert_eq!(combinations(4, 3).len(), 4);
    }

    #[test]
    fn coarse_covering_is_small() {
        let c = cover(0.5);
        assert!(c.len() <= 10, "{}", c.len());
        assert!(c.eta_met());
    }

    #[test]
    fn point_mass_contamination_is_exact() {
        let clean = default_clean(1.0).unwrap();
        let model = ContaminationModel::new(clean, 0.0, Contamination::PointMass { at: vec![5.0] }).unwrap();
        let xs = sample_contaminated(&model, 2000, 3).unwrap();
        let mean = xs.iter().sum::<f64>() / 2000.0;
        let target = -0.8 * 0.3 + 0.1 * 0.45 + 0.7 * 0.25;
        let var = 1.0 + (0.64 * 0.3 + 0.01 * 0.45 + 0.49 * 0.25) - target * target;
        assert!((mean - target).abs() < 4.0 * sqrt(var / 2000.0));
        assert!(ContaminationModel::new(default_clean(1.0).unwrap(), 1.0, Contamination::Uniform { lo: 0.0, hi: 1.0 }).is_err());
    }

    #[test]
    fn sets_separate_pairs_exactly() {
        let c = cover(0.3);
        let quad = QuadratureSpec::default().with_tol(1e-12, 1e-10);
        for (s, set) in c.sets().iter().enumerate().step_by(7) {
            let (qi, qj) = (&c.candidates()[set.i], &c.candidates()[set.j]);
            let tv = divergence(DivergenceKind::Tv, qi, qj, &quad).unwrap().value;
            let scheffe = c.probability(set.i, s) - c.probability(set.j, s);
            assert!((scheffe - tv).abs() < 1e-9, "{scheffe} vs {tv}");
            assert!((c.dist_between(set.i, set.j) - tv).abs() < 1e-9);
        }
    }

    #[test]
    fn single_candidate_ignores_data() {
        let c = build_covering(1.0, 1, 10.0, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.estimate_index(&[9.0, -4.0, 2.0]).unwrap(), 0);
    }

    #[test]
    fn two_point_identity_holds() {
        let quad = QuadratureSpec::default();
        let tv11 = 1.806984e-14;
        let eps = tv11 / (1.0 + tv11) * (1.0 + 1e-6);
        let r = two_point_lower_bound(eps, 13, 1.0, 1, &quad).unwrap();
        assert_eq!(r.n, 11);
        assert!(r.coincidence_error <= 1e-10);
        assert!(r.masses_valid(1e-9), "{} {}", r.q1_mass, r.q2_mass);
        assert_eq!(r.lift_preserved(), Some(true));
    }
}
