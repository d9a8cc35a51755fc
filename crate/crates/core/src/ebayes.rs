//! Tweedie denoisers and the regret of regularized plug-in empirical Bayes.
//!
//! The regret `E_{X∼f_π}‖θ̂(X) − θ̂*(X)‖²` is integrated over `|x| ≤ M + 10`
//! per axis. Outside that box the plug-in estimate lies between `x` and a
//! point of `[−M, M]^d`, so the integrand is at most `(‖x‖ + M)² f_π(x)` and
//! the neglected mass has a closed-form Gaussian bound.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, pow, sqrt};

use crate::divergences::QuadratureSpec;
use crate::error::{domain, Error, Result};
use crate::mixtures::{mixture_density, mixture_gradient, MixingMeasure};
use crate::quad::{integrate, Tolerance};
use crate::robust::{risk_sweep, SweepConfig, YatracosCovering};
use crate::special::{illinois, normal_pdf, normal_sf, INV_SQRT_2PI};

const TRUNCATION_PAD: f64 = 10.0;
const KINK_SCAN_STEP: f64 = 0.01;

/// Which density feeds the denoiser.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySource {
    /// The true prior's density.
    Oracle,
    /// An estimated mixture `f̂`.
    Plugin(MixingMeasure),
}

/// Regularized Tweedie denoiser `x + ∇f̂(x)/(f̂(x) ∨ ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    rho: f64,
    source: DensitySource,
}

impl DenoiserConfig {
    pub fn new(rho: f64, source: DensitySource) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(domain("rho", rho));
        }
        Ok(Self { rho, source })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn source(&self) -> &DensitySource {
        &self.source
    }

    /// The density actually used when the truth is `truth`.
    pub fn density<'a>(&'a self, truth: &'a MixingMeasure) -> &'a MixingMeasure {
        match &self.source {
            DensitySource::Oracle => truth,
            DensitySource::Plugin(m) => m,
        }
    }
}

/// Posterior mean `x + ∇f_π(x)/f_π(x)` under the prior `π`.
///
/// Computed as a softmax-weighted average of the atoms so that it stays a
/// convex combination even where `f_π` underflows.
pub fn tweedie(mix: &MixingMeasure, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mix.dim() {
        return Err(Error::DimensionMismatch { left: mix.dim(), right: x.len() });
    }
    let d = mix.dim();
    let logits: Vec<f64> = (0..mix.len())
        .map(|j| {
            let w = mix.weights()[j];
            if w > 0.0 {
                log(w) - 0.5 * mix.atom(j).iter().zip(x).map(|(t, v)| (t - v) * (t - v)).sum::<f64>()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut num = vec![0.0; d];
    let mut den = 0.0;
    for (j, l) in logits.iter().enumerate() {
        let p = exp(l - top);
        den += p;
        for (acc, t) in num.iter_mut().zip(mix.atom(j)) {
            *acc += p * t;
        }
    }
    Ok(num.into_iter().map(|v| v / den).collect())
}

/// `x + ∇f(x)/(f(x) ∨ ρ)` for the density of `density`.
pub fn tweedie_regularized(rho: f64, density: &MixingMeasure, x: &[f64]) -> Result<Vec<f64>> {
    if !(rho > 0.0) {
        return Err(domain("rho", rho));
    }
    let f = mixture_density(density, x)?;
    if f >= rho && f > 0.0 {
        return tweedie(density, x);
    }
    let g = mixture_gradient(density, x)?;
    Ok(x.iter().zip(&g).map(|(xi, gi)| xi + gi / rho).collect())
}

/// `ℰ²(ε, n) = ε^{2(1 − (2+δ)/ln(ln(1/ε) ∨ e))} + ln^{d+1}(n)/n`; the first term is 0 at `ε = 0`.
pub fn error_function_sq(epsilon: f64, n: usize, d: usize, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(domain("epsilon", epsilon));
    }
    if n < 2 {
        return Err(domain("n", n as f64));
    }
    let contamination = if epsilon > 0.0 {
        let a = (2.0 + delta) / log(log(1.0 / epsilon).max(core::f64::consts::E));
        pow(epsilon, 2.0 * (1.0 - a))
    } else {
        0.0
    };
    Ok(contamination + sample_term(n, d))
}

/// `ln^{d+1}(n)/n`.
pub fn sample_term(n: usize, d: usize) -> f64 {
    let nf = n as f64;
    pow(log(nf), (d + 1) as f64) / nf
}

/// `ρ = (2π)^{−d/2}(ℰ² ∧ e^{−2})`.
pub fn floor_for(e2: f64, d: usize) -> f64 {
    pow(INV_SQRT_2PI, d as f64) * e2.min(exp(-2.0))
}

/// Regret with its two decomposition terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegretReport {
    /// `∫‖θ̂_ρ − θ̂*‖² f_π`.
    pub regret: f64,
    /// `∫‖θ̂_ρ − θ̂*_ρ‖² f_π`, where `θ̂*_ρ` floors the true density.
    pub estimation: f64,
    /// `∫‖θ̂*_ρ − θ̂*‖² f_π`.
    pub floor: f64,
    /// Quadrature error of the three integrals combined.
    pub error_bound: f64,
    /// Bound on the mass outside the integration box, added to `error_bound`.
    pub tail_bound: f64,
    pub converged: bool,
}

impl RegretReport {
    /// `regret ≤ 2·estimation + 2·floor` within the error bound.
    pub fn decomposition_holds(&self) -> bool {
        self.regret <= 2.0 * (self.estimation + self.floor) + self.error_bound
    }
}

/// `2∫_{a}^∞ (u + c)² φ(u) du` with `a = R − M`, `c = 2M`, times `d` axes.
fn tail_envelope(m: f64, d: usize) -> f64 {
    let a = TRUNCATION_PAD;
    let c = 2.0 * m;
    let one_side = (a + 2.0 * c) * normal_pdf(a) + (1.0 + c * c) * normal_sf(a);
    2.0 * d as f64 * one_side
}

/// Regret of the regularized denoiser against the Bayes rule of `truth`.
pub fn regret(truth: &MixingMeasure, cfg: &DenoiserConfig, quad: &QuadratureSpec) -> Result<RegretReport> {
    let d = truth.dim();
    let density = cfg.density(truth);
    if density.dim() != d {
        return Err(Error::DimensionMismatch { left: d, right: density.dim() });
    }
    if d > 2 {
        return Err(Error::Unsupported(String::from("regret quadrature needs d <= 2")));
    }
    let rho = cfg.rho;
    let m = truth.radius().max(density.radius());
    let r = m + TRUNCATION_PAD;
    let tol = Tolerance { abs: quad.abs_tol.max(1e-15), rel: quad.rel_tol.max(1e-10), max_evals: quad.node_budget };
    let terms = |x: &[f64]| -> [f64; 3] {
        let f = mixture_density(truth, x).unwrap_or(0.0);
        let bayes = tweedie(truth, x).unwrap_or_default();
        let floored = tweedie_regularized(rho, truth, x).unwrap_or_default();
        let plug = tweedie_regularized(rho, density, x).unwrap_or_default();
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
        [sq(&plug, &bayes) * f, sq(&plug, &floored) * f, sq(&floored, &bayes) * f]
    };
    let mut out = [0.0; 3];
    let mut err = 0.0;
    let mut converged = true;
    if d == 1 {
        let mut breaks = kinks(truth, density, rho, r);
        breaks.extend([-r, -m, m, r]);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        for (slot, term) in out.iter_mut().zip(0..3) {
            let res = integrate(|x| terms(&[x])[term], &breaks, tol);
            *slot = res.value;
            err += res.error;
            converged &= res.converged;
        }
    } else {
        let edges = [-r, -m, m, r];
        for (slot, term) in out.iter_mut().zip(0..3) {
            let mut inner_err = 0.0;
            let mut inner_ok = true;
            let outer = integrate(
                |x0| {
                    let res = integrate(|x1| terms(&[x0, x1])[term], &edges, tol);
                    inner_err += res.error;
                    inner_ok &= res.converged;
                    res.value
                },
                &edges,
                tol,
            );
            *slot = outer.value;
            err += outer.error + inner_err / outer.evals.max(1) as f64 * (2.0 * r);
            converged &= outer.converged && inner_ok;
        }
    }
    let tail_bound = tail_envelope(m, d);
    Ok(RegretReport { regret: out[0], estimation: out[1], floor: out[2], error_bound: err + tail_bound, tail_bound, converged })
}

/// Points on `[−r, r]` where either density crosses `ρ`.
fn kinks(truth: &MixingMeasure, density: &MixingMeasure, rho: f64, r: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for mix in [truth, density] {
        let f = |x: f64| mixture_density(mix, &[x]).unwrap_or(0.0) - rho;
        let steps = (2.0 * r / KINK_SCAN_STEP) as usize;
        let mut x0 = -r;
        let mut v0 = f(x0);
        for i in 1..=steps {
            let x1 = -r + 2.0 * r * i as f64 / steps as f64;
            let v1 = f(x1);
            if (v0 >= 0.0) != (v1 >= 0.0) {
                out.push(illinois(f, x0, x1, v0, v1, 1e-12));
            }
            x0 = x1;
            v0 = v1;
        }
    }
    out
}

/// `∫(1 − f/(f∨ρ))² (f′)²/f`, the regret of the floored oracle, in one dimension.
pub fn floor_term(truth: &MixingMeasure, rho: f64, quad: &QuadratureSpec) -> Result<f64> {
    if truth.dim() != 1 {
        return Err(Error::Unsupported(String::from("the direct floor term is one-dimensional")));
    }
    let r = truth.radius() + TRUNCATION_PAD;
    let mut breaks = kinks(truth, truth, rho, r);
    breaks.extend([-r, r]);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let tol = Tolerance { abs: quad.abs_tol.max(1e-15), rel: quad.rel_tol.max(1e-10), max_evals: quad.node_budget };
    let res = integrate(
        |x| {
            let f = mixture_density(truth, &[x]).unwrap_or(0.0);
            if f <= 0.0 || f >= rho {
                return 0.0;
            }
            // (f′/f)² f = (θ̂* − x)² f
            let score = tweedie(truth, &[x]).map(|t| t[0] - x).unwrap_or(0.0);
            let damp = 1.0 - f / rho;
            damp * damp * score * score * f
        },
        &breaks,
        tol,
    );
    Ok(res.value)
}

/// How the ε-term of `ℰ²` is instantiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EpsilonTerm {
    /// The cell's measured mean TV² risk, used when `ε > 0`.
    #[default]
    MeasuredTvRisk,
    /// `ε^{2(1 − (2+δ)/ln(ln(1/ε) ∨ e))}`.
    Formula,
}

/// Aggregates of one `(ε, n)` cell of the regret experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegretRow {
    pub epsilon: f64,
    pub n: usize,
    pub replicates: usize,
    pub e2: f64,
    pub rho: f64,
    pub regret_mean: f64,
    pub regret_se: f64,
    pub estimation_mean: f64,
    pub floor_mean: f64,
    pub h2_mean: f64,
    pub tv2_mean: f64,
    /// Largest `regret / (H² L)` over replicates with `H > 0`, `L = ln(1/H) ∨ ln³(1/ℰ ∨ e)`.
    pub c_fit: f64,
    pub decomposition_violations: usize,
}

/// Output of [`regret_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegretExperiment {
    pub rows: Vec<RegretRow>,
}

impl RegretExperiment {
    /// Mean regret strictly decreasing along `n` at this `ε`.
    pub fn decreasing_in_n(&self, epsilon: f64) -> bool {
        let curve: Vec<f64> = self.rows.iter().filter(|r| r.epsilon == epsilon).map(|r| r.regret_mean).collect();
        curve.windows(2).all(|w| w[1] < w[0])
    }

    /// Mean regret increasing in `ε` at the largest `n`.
    pub fn plateau_ordered(&self) -> bool {
        let n_max = self.rows.iter().map(|r| r.n).max().unwrap_or(0);
        let mut plateau: Vec<(f64, f64)> = self.rows.iter().filter(|r| r.n == n_max).map(|r| (r.epsilon, r.regret_mean)).collect();
        plateau.sort_by(|a, b| a.0.total_cmp(&b.0));
        plateau.windows(2).all(|w| w[1].1 > w[0].1)
    }

    /// Largest fitted constant across cells.
    pub fn c_fit(&self) -> f64 {
        self.rows.iter().map(|r| r.c_fit).fold(0.0, f64::max)
    }
}

/// Sample, estimate by Yatracos, denoise with the floored plug-in and measure regret.
pub fn regret_experiment(
    config: &SweepConfig,
    covering: &YatracosCovering,
    epsilon_term: EpsilonTerm,
    quad: &QuadratureSpec,
) -> Result<RegretExperiment> {
    let d = covering.dim();
    let sweep = risk_sweep(config, covering, quad)?;
    let mut rows = Vec::with_capacity(sweep.rows.len());
    for row in &sweep.rows {
        let eps_part = if row.epsilon > 0.0 {
            match epsilon_term {
                EpsilonTerm::MeasuredTvRisk => row.tv2_mean,
                EpsilonTerm::Formula => error_function_sq(row.epsilon, row.n, d, config.delta)? - sample_term(row.n, d),
            }
        } else {
            0.0
        };
        let e2 = eps_part + sample_term(row.n, d);
        let rho = floor_for(e2, d);
        let ln_e = 0.5 * log(e2);
        let poly = pow((-ln_e).max(1.0), 3.0);
        let mut cache: BTreeMap<usize, RegretReport> = BTreeMap::new();
        let mut regrets = Vec::with_capacity(row.replicates);
        let (mut est, mut flo, mut c_fit, mut violations) = (0.0, 0.0, 0.0f64, 0);
        for rec in sweep.records.iter().filter(|r| r.epsilon == row.epsilon && r.n == row.n) {
            let rep = match cache.get(&rec.estimate) {
                Some(r) => *r,
                None => {
                    let cfg = DenoiserConfig::new(rho, DensitySource::Plugin(covering.candidates()[rec.estimate].clone()))?;
                    let r = regret(&config.clean, &cfg, quad)?;
                    cache.insert(rec.estimate, r);
                    r
                }
            };
            regrets.push(rep.regret);
            est += rep.estimation;
            flo += rep.floor;
            if !rep.decomposition_holds() {
                violations += 1;
            }
            if rec.h2 > 0.0 {
                let h = sqrt(rec.h2);
                let l = (-log(h)).max(poly);
                c_fit = c_fit.max(rep.regret / (rec.h2 * l));
            }
        }
        let k = regrets.len() as f64;
        let mean = regrets.iter().sum::<f64>() / k;
        let se = if regrets.len() > 1 {
            sqrt(regrets.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (k - 1.0) / k)
        } else {
            0.0
        };
        rows.push(RegretRow {
            epsilon: row.epsilon,
            n: row.n,
            replicates: row.replicates,
            e2,
            rho,
            regret_mean: mean,
            regret_se: se,
            estimation_mean: est / k,
            floor_mean: flo / k,
            h2_mean: row.h2_mean,
            tv2_mean: row.tv2_mean,
            c_fit,
            decomposition_violations: violations,
        });
    }
    Ok(RegretExperiment { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::tanh;

    fn two_point() -> MixingMeasure {
        MixingMeasure::new(1, 1.0, vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn tweedie_closed_forms() {
        let zero = MixingMeasure::dirac(&[0.0], 1.0).unwrap();
        let mu = MixingMeasure::dirac(&[0.4], 1.0).unwrap();
        for x in [-30.0, -2.0, 0.0, 0.7, 5.0] {
            assert_eq!(tweedie(&zero, &[x]).unwrap()[0], 0.0);
            assert!((tweedie(&mu, &[x]).unwrap()[0] - 0.4).abs() < 1e-15);
            assert!((tweedie(&two_point(), &[x]).unwrap()[0] - tanh(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn floor_always_active_shrinks_to_identity() {
        let pi = two_point();
        let rho = 1.0;
        for x in [-2.0, 0.3, 1.5] {
            let g = mixture_gradient(&pi, &[x]).unwrap()[0];
            assert!((tweedie_regularized(rho, &pi, &[x]).unwrap()[0] - (x + g)).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_regret_is_the_floor_term() {
        let pi = two_point();
        let quad = QuadratureSpec::default();
        for rho in [0.05, 0.01, 1e-4] {
            let r = regret(&pi, &DenoiserConfig::new(rho, DensitySource::Oracle).unwrap(), &quad).unwrap();
            let direct = floor_term(&pi, rho, &quad).unwrap();
            assert!((r.regret - direct).abs() <= 1e-10 * direct.max(1e-12), "{} vs {direct}", r.regret);
            assert!(r.estimation == 0.0);
        }
    }

    #[test]
    fn error_function_examples() {
        assert!((error_function_sq(0.0, 1000, 1, 1.0).unwrap() - sample_term(1000, 1)).abs() < 1e-15);
        assert!(error_function_sq(0.05, 1000, 1, 1.0).unwrap() > 1.0);
        assert!((floor_for(10.0, 1) - INV_SQRT_2PI * exp(-2.0)).abs() < 1e-16);
    }
}
