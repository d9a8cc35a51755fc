//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line on
//! stderr (uncaptured) and fails when any of its conditions does.
//!
//! The tests take a shared lock so the reported runtimes are not inflated by
//! each other.

use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use gmdl::manifest::RunManifest;
use gmdl_core::bounds::{random_pair, verify_main_theorem_with, TheoremConstants};
use gmdl_core::divergences::{divergence, DivergenceKind, QuadratureSpec};
use gmdl_core::ebayes::{regret, regret_experiment, tweedie, DenoiserConfig, DensitySource, EpsilonTerm};
use gmdl_core::extremal::{estimate_cn, restricted_range_check};
use gmdl_core::hermite::{cd_kernel_diag, hermite_1d, kernel_sup_bound, mehler, MehlerMode};
use gmdl_core::mixtures::{mixture_density, mixture_gradient, phi_d};
use gmdl_core::quad::Tolerance;
use gmdl_core::robust::{build_covering, default_clean, risk_sweep, two_point_lower_bound, SweepConfig};
use gmdl_core::sharpness::{rate_trend, verify_sharpness, SharpnessReport};
use gmdl_core::{MixingMeasure, PrecisionRequest, Tier};

static SERIAL: Mutex<()> = Mutex::new(());

const PAIR_SEED: u64 = 20240917;
const PAIRS: usize = 200;

/// Collected failures of one criterion.
#[derive(Default)]
struct Checks(Vec<String>);

impl Checks {
    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.0.push(what());
        }
    }

    fn finish(mut self, id: u32, title: &str, started: Instant, limit: Duration, note: &str) {
        let elapsed = started.elapsed();
        if elapsed > limit {
            self.0.push(format!("runtime {elapsed:.1?} exceeds {limit:?}"));
        }
        let note = if note.is_empty() { String::new() } else { format!(" [{note}]") };
        let line = if self.0.is_empty() {
            format!("PASS criterion {id:>2}: {title} ({elapsed:.1?}){note}\n")
        } else {
            format!("FAIL criterion {id:>2}: {title} ({elapsed:.1?}){note}: {}\n", self.0.join("; "))
        };
        // bypasses the test harness capture so the verdict always shows
        let _ = std::io::stderr().write_all(line.as_bytes());
        assert!(self.0.is_empty(), "{line}");
    }
}

fn quad() -> QuadratureSpec {
    QuadratureSpec::default().with_tol(1e-12, 1e-9)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[test]
fn criterion_01_gaussian_closed_forms() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();
    let spec = QuadratureSpec::default().with_tol(1e-14, 1e-11);
    for mu in [0.1, 0.5, 1.0, 2.0] {
        let p = MixingMeasure::dirac(&[0.0], 2.0).unwrap();
        let q = MixingMeasure::dirac(&[mu], 2.0).unwrap();
        let expected = [
            (DivergenceKind::Tv, 2.0 * std_normal_cdf(mu / 2.0) - 1.0),
            (DivergenceKind::H2, -libm::expm1(-mu * mu / 8.0)),
            (DivergenceKind::Chi2, libm::expm1(mu * mu)),
            (DivergenceKind::Kl, mu * mu / 2.0),
        ];
        for (kind, want) in expected {
            let got = divergence(kind, &p, &q, &spec).unwrap().value;
            checks.require(rel(got, want) <= 1e-8, || format!("{kind:?} at mu={mu}: {got} vs {want}"));
        }
    }
    checks.finish(1, "closed-form Gaussian divergences", started, Duration::from_secs(1), "");
}

#[test]
fn criterion_02_sandwich_suite() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();
    let mut worst = f64::INFINITY;
    for id in 0..PAIRS {
        let pair = random_pair(PAIR_SEED, id).unwrap();
        let value = |kind| divergence(kind, &pair.pi, &pair.eta, &quad()).unwrap().value;
        let (tv, h, chi2) = (value(DivergenceKind::Tv), value(DivergenceKind::H), value(DivergenceKind::Chi2));
        let margins = [tv - h * h, std::f64::consts::SQRT_2 * h - tv, chi2 - h * h];
        let least = margins.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.min(least);
        checks.require(least >= -1e-9, || format!("pair {id} (d={}, M={}): margins {margins:?}", pair.d, pair.m));
    }
    let note = format!("{PAIRS} pairs, smallest margin {worst:.3e}");
    checks.finish(2, "H² ≤ TV ≤ √2 H and H² ≤ χ²", started, Duration::from_secs(120), &note);
}

#[test]
fn criterion_03_transfer_inequalities() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();
    let mut cache: Vec<((usize, u64), TheoremConstants)> = Vec::new();
    let mut smallest_tv = f64::INFINITY;
    for id in 0..PAIRS {
        let pair = random_pair(PAIR_SEED, id).unwrap();
        let key = (pair.d, pair.m.to_bits());
        let constants = match cache.iter().find(|(k, _)| *k == key) {
            Some((_, c)) => *c,
            None => {
                let c = TheoremConstants::new(1.0, pair.m, pair.d).unwrap();
                cache.push((key, c));
                c
            }
        };
        let report = verify_main_theorem_with(&pair.pi, &pair.eta, &constants, &quad()).unwrap();
        smallest_tv = smallest_tv.min(report.tv);
        for (name, c) in [("chi", report.chi), ("norm", report.norm), ("hellinger", report.hellinger)] {
            checks.require(!c.violated, || format!("pair {id} {name}: lhs {} rhs {} tolerance {}", c.lhs, c.rhs, c.tolerance));
        }
    }
    let note = format!("{PAIRS} pairs, δ = 1, {} constant sets, smallest TV {smallest_tv:.2e}", cache.len());
    checks.finish(3, "√χ², ‖g‖ and H below (C₀ ∨ TV^-α) TV", started, Duration::from_secs(300), &note);
}

/// `He_k(x)/√k!` by its own three-term recurrence.
fn he_normalized(k: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for j in 0..k {
        let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

#[test]
fn criterion_04_spectral_suite() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();

    // trapezoid on a wide grid is spectrally accurate for these integrands
    let h = 0.01;
    let mut gram = [[0.0f64; 13]; 13];
    for i in 0..=8000 {
        let x = -40.0 + h * i as f64;
        let w = h * phi_d(&[x]);
        let vals: Vec<f64> = (0..13).map(|k| hermite_1d(k, x)).collect();
        for j in 0..13 {
            for k in 0..13 {
                gram[j][k] += w * vals[j] * vals[k];
            }
        }
    }
    for (j, row) in gram.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let target = if j == k { 1.0 } else { 0.0 };
            checks.require((v - target).abs() <= 1e-10, || format!("<h_{j}, h_{k}> = {v}"));
        }
    }
    for k in 0..=12 {
        for x in [-3.3, -0.7, 0.0, 1.9] {
            let (a, b) = (hermite_1d(k, x), he_normalized(k, x));
            checks.require((a - b).abs() <= 1e-12 * (1.0 + b.abs()), || format!("h_{k}({x}) = {a} vs {b}"));
        }
    }

    let points = [-2.0, -0.6, 0.0, 0.9, 1.7];
    let mut mehler_worst: f64 = 0.0;
    for t in [0.3, 0.5, 1.0, 2.0] {
        for &x in &points {
            for &y in &points {
                for (xs, ys) in [(vec![x], vec![y]), (vec![x, y], vec![y, -x])] {
                    let closed = mehler(&xs, &ys, t, MehlerMode::Closed).unwrap();
                    let series = mehler(&xs, &ys, t, MehlerMode::Series { n_max: 80 }).unwrap();
                    mehler_worst = mehler_worst.max((closed - series).abs());
                }
            }
        }
    }
    checks.require(mehler_worst <= 1e-10, || format!("Mehler closed vs series {mehler_worst:e}"));

    for d in 1..=3usize {
        let (half, step) = match d {
            1 => (12.0, 0.01),
            2 => (8.0, 0.1),
            _ => (6.0, 0.4),
        };
        let per_axis = (2.0 * half / step) as usize + 1;
        for n in 0..=10u32 {
            let bound = kernel_sup_bound(n, d);
            let mut sup: f64 = 0.0;
            let mut idx = vec![0usize; d];
            'grid: loop {
                let x: Vec<f64> = idx.iter().map(|&i| -half + step * i as f64).collect();
                sup = sup.max(cd_kernel_diag(n, &x).unwrap() * phi_d(&x));
                for axis in 0..d {
                    idx[axis] += 1;
                    if idx[axis] < per_axis {
                        continue 'grid;
                    }
                    idx[axis] = 0;
                }
                break;
            }
            checks.require(sup <= bound * (1.0 + 1e-12), || format!("kernel sup n={n} d={d}: {sup} > {bound}"));
            let tail = restricted_range_check(n, d, 2.0, Tolerance::default()).unwrap();
            checks.require(tail.two_sided_ok, || format!("kernel tail n={n} d={d}: {tail:?}"));
        }
    }
    let note = format!("Mehler gap {mehler_worst:.1e}");
    checks.finish(4, "Hermite, Mehler and kernel bounds", started, Duration::from_secs(120), &note);
}

#[test]
fn criterion_05_extremal_sandwich() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();
    for n in 1..=12u32 {
        let est = estimate_cn(n, 1, 64, 1).unwrap();
        let nf = n as f64;
        let l1 = 2f64.powf(nf / 2.0) * libm::tgamma((nf + 1.0) / 2.0) / std::f64::consts::PI.sqrt();
        let dfact: f64 = (1..=n).map(|j| (2 * j - 1) as f64).product();
        let gamma_form = l1 / dfact.sqrt();
        checks.require(rel(est.monomial_ratio, gamma_form) <= 1e-10, || {
            format!("n={n}: monomial ratio {} vs {gamma_form}", est.monomial_ratio)
        });
        match est.lower_bound {
            Some(lower) => checks.require(lower <= est.estimate, || format!("n={n}: lower {lower} > {}", est.estimate)),
            None => checks.require(false, || format!("n={n}: no lower bound")),
        }
        checks.require(est.estimate <= est.monomial_ratio * (1.0 + 1e-12), || {
            format!("n={n}: estimate {} > {}", est.estimate, est.monomial_ratio)
        });
    }
    checks.finish(5, "lower bound ≤ c_n estimate ≤ monomial ratio, d = 1, n ≤ 12", started, Duration::from_secs(600), "");
}

#[test]
fn criterion_06_sharp_family() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();
    let reports: Vec<SharpnessReport> =
        (11..=31).step_by(2).map(|n| verify_sharpness(n, 1.0, PrecisionRequest::Auto, &QuadratureSpec::default()).unwrap()).collect();
    let required = [
        "tv_below_e_minus_e",
        "weights_bounded",
        "even_moments_vanish",
        "q_monomial_identity",
        "dual_path_tv",
        "alpha_star_exponent",
    ];
    let mut tiers = Vec::new();
    for r in &reports {
        let n = r.example.n;
        for name in required {
            let c = r.checks.iter().find(|c| c.name == name).expect("check present");
            checks.require(c.holds, || format!("n={n}: {name} ({} vs {})", c.lhs, c.rhs));
        }
        checks.require(r.example.tv_n < (-std::f64::consts::E).exp(), || format!("n={n}: TV {}", r.example.tv_n));
        let wmax = r.example.weights_w.iter().fold(0.0f64, |a, w| a.max(w.abs()));
        checks.require(wmax <= 1.0 / (n as f64 + 1.0) * (1.0 + 1e-12), || format!("n={n}: |w| {wmax}"));
        checks.require(r.q_identity_error <= 1e-10, || format!("n={n}: q_n identity {}", r.q_identity_error));
        checks.require(r.moment_bound.k_max >= 3 * n && r.moment_bound.holds(), || format!("n={n}: moment bound {:?}", r.moment_bound.violations));
        checks.require(rel(r.tv_direct.value, r.example.tv_n) < 5e-4, || format!("n={n}: dual path {} vs {}", r.tv_direct.value, r.example.tv_n));
        let ln_tv = r.example.tv_n.ln();
        let lower = (1.0 - 0.33 / (-ln_tv).ln()) * ln_tv;
        checks.require(r.example.h_n.ln() >= lower && r.margin >= 0.0, || format!("n={n}: ln H {} < {lower}", r.example.h_n.ln()));
        let expect_double = n <= 15;
        checks.require(expect_double == (r.tier == Tier::Double), || format!("n={n}: tier {}", r.tier));
        tiers.push(format!("{n}:{}", r.tier));
    }
    let trend = rate_trend(&reports);
    checks.require(trend.monotone_toward_half, || format!("rate trend {:?}", trend.points));
    let first = trend.points.first().map(|p| p.1).unwrap_or(f64::NAN);
    let last = trend.points.last().map(|p| p.1).unwrap_or(f64::NAN);
    let note = format!(
        "rate {first:.4} -> {last:.4}; atom-sum cross-check tiers {}; TV and H come from the series route, integrated in double at every n",
        tiers.join(" ")
    );
    checks.finish(6, "sharp family n = 11..31", started, Duration::from_secs(600), &note);
}

fn acceptance_sweep() -> SweepConfig {
    SweepConfig::new(default_clean(1.0).unwrap(), vec![0.0, 0.05, 0.1], vec![500, 2000, 8000], 50, PAIR_SEED)
}

#[test]
fn criterion_07_robust_estimation() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();
    let covering = build_covering(1.0, 1, 0.1, 400).unwrap();
    let sweep = risk_sweep(&acceptance_sweep(), &covering, &quad()).unwrap();
    checks.require(sweep.decreasing_in_n(0.0), || "TV² risk not decreasing in n at ε = 0".into());
    checks.require(sweep.plateau_ordered(), || "plateau not ordered by ε".into());
    let broken = sweep.records.iter().filter(|r| !r.yatracos_holds()).count();
    checks.require(broken == 0, || format!("{broken} replicates break 3η + 3ε + 2 dist"));
    for row in &sweep.rows {
        let share = row.hoeffding_violations as f64 / row.replicates as f64;
        checks.require(share <= 0.05, || format!("ε={} n={}: Hoeffding violated in {:.0}%", row.epsilon, row.n, 100.0 * share));
    }
    let curve: Vec<String> = sweep.rows.iter().filter(|r| r.epsilon == 0.0).map(|r| format!("{:.2e}", r.tv2_mean)).collect();
    let note = format!("N = {}, η_π = {:.3}, TV² at ε=0: {}", covering.len(), sweep.eta_pi, curve.join(" "));
    checks.finish(7, "Yatracos risk sweep", started, Duration::from_secs(1800), &note);
}

#[test]
fn criterion_08_two_point_construction() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();
    let tv11 = verify_sharpness(11, 1.0, PrecisionRequest::Auto, &QuadratureSpec::default()).unwrap().example.tv_n;
    // smallest ε with TV₁₁ ≤ ε/(1−ε), nudged up
    let epsilon = tv11 / (1.0 + tv11) * (1.0 + 1e-6);
    let r = two_point_lower_bound(epsilon, 13, 1.0, 2, &QuadratureSpec::default()).unwrap();
    checks.require(r.n == 11, || format!("matched member n = {}", r.n));
    checks.require(r.coincidence_error <= 1e-10, || format!("density identity off by {:e}", r.coincidence_error));
    checks.require(r.masses_valid(1e-9), || format!("Q masses {} {} min {}", r.q1_mass, r.q2_mass, r.q_min));
    checks.require(r.lift_preserved() == Some(true), || format!("lift TV {:?} H {:?} vs {} {}", r.tv_lifted, r.h_lifted, r.tv, r.h));
    let note = format!("ε = {epsilon:.4e}, H²/2 = {:.3e}", r.half_h2);
    checks.finish(8, "two-point lower bound with d = 2 lift", started, Duration::from_secs(60), &note);
}

#[test]
fn criterion_09_empirical_bayes() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();
    let two_point = MixingMeasure::new(1, 1.0, vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
    for i in -80..=80 {
        let x = 0.1 * i as f64;
        let got = tweedie(&two_point, &[x]).unwrap()[0];
        checks.require((got - x.tanh()).abs() <= 1e-10, || format!("posterior mean at {x}: {got}"));
    }

    let prior = MixingMeasure::new(2, 1.0, vec![-0.7, 0.2, 0.4, -0.9, 0.95, 0.5], vec![0.2, 0.5, 0.3]).unwrap();
    let step = 1e-5;
    let mut fd_worst: f64 = 0.0;
    for x in [[-2.0, 0.3], [0.0, 0.0], [1.2, -0.8], [3.0, 2.5]] {
        let grad = mixture_gradient(&prior, &x).unwrap();
        for axis in 0..2 {
            let (mut hi, mut lo) = (x, x);
            hi[axis] += step;
            lo[axis] -= step;
            let fd = (mixture_density(&prior, &hi).unwrap() - mixture_density(&prior, &lo).unwrap()) / (2.0 * step);
            fd_worst = fd_worst.max((fd - grad[axis]).abs());
        }
    }
    checks.require(fd_worst <= 1e-7, || format!("gradient vs finite differences {fd_worst:e}"));

    let spec = QuadratureSpec::default().with_tol(1e-13, 1e-10);
    let floors = [1e-1, 1e-3, 1e-6, 1e-9];
    let oracle: Vec<f64> = floors
        .iter()
        .map(|&rho| regret(&two_point, &DenoiserConfig::new(rho, DensitySource::Oracle).unwrap(), &spec).unwrap().regret)
        .collect();
    checks.require(oracle.windows(2).all(|w| w[1] <= w[0]) && oracle[3] < 1e-8, || format!("oracle regret {oracle:?}"));

    let covering = build_covering(1.0, 1, 0.1, 400).unwrap();
    let exp = regret_experiment(&acceptance_sweep(), &covering, EpsilonTerm::default(), &quad()).unwrap();
    checks.require(exp.decreasing_in_n(0.0), || "regret not decreasing in n at ε = 0".into());
    checks.require(exp.plateau_ordered(), || "regret plateau not ordered by ε".into());
    let broken: usize = exp.rows.iter().map(|r| r.decomposition_violations).sum();
    checks.require(broken == 0, || format!("{broken} regret decompositions fail"));
    let note = format!("FD gap {fd_worst:.1e}, oracle regret at ρ=1e-9 {:.1e}", oracle[3]);
    checks.finish(9, "Tweedie denoiser and regret", started, Duration::from_secs(1200), &note);
}

fn replay_matches(label: &str, args: &[String], out: &Path, checks: &mut Checks) {
    let argv = std::iter::once(String::from("gmdl")).chain(args.iter().cloned());
    let status = gmdl::run(argv);
    checks.require(status == 0, || format!("{label}: exit {status}"));
    let first = std::fs::read(out).unwrap_or_default();
    let manifest = RunManifest::sidecar(out);
    let recorded = RunManifest::read(&manifest).map(|m| m.outputs).unwrap_or_default();
    let _ = std::fs::remove_file(out);
    let replayed = gmdl::run(["gmdl".into(), String::from("replay"), manifest.display().to_string()]);
    checks.require(replayed == status, || format!("{label}: replay exit {replayed}"));
    let second = std::fs::read(out).unwrap_or_default();
    checks.require(!first.is_empty() && first == second, || format!("{label}: replay differs"));
    let digest = gmdl::manifest::sha256_hex(&second);
    checks.require(recorded.iter().any(|o| o.sha256 == digest), || format!("{label}: manifest digest differs"));
}

#[test]
fn criterion_10_replay_determinism() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut checks = Checks::default();
    let dir = tempfile::tempdir().unwrap();
    let at = |name: &str| dir.path().join(name);
    let sweep = r#"{"M":1,"d":1,"eta":0.1,"epsilons":[0,0.1],"ns":[200,800],"replicates":5,"seed":11}"#;
    std::fs::write(at("sweep.json"), sweep).unwrap();
    std::fs::write(at("pi.json"), r#"{"d":2,"M":1,"atoms":[[0.2,-0.4],[-0.9,0.1]],"weights":[0.6,0.4]}"#).unwrap();
    std::fs::write(at("eta.json"), r#"{"d":2,"M":1,"atoms":[[0.5,0.5]],"weights":[1]}"#).unwrap();
    let s = |p: std::path::PathBuf| p.display().to_string();
    let runs: Vec<(&str, Vec<String>, std::path::PathBuf)> = vec![
        ("div", vec!["div".into(), "--kind".into(), "H".into(), s(at("pi.json")), s(at("eta.json")), "--out".into(), s(at("div.json"))], at("div.json")),
        ("bounds verify", vec!["bounds".into(), "verify".into(), "--pairs".into(), "6".into(), "--out".into(), s(at("bounds.csv"))], at("bounds.csv")),
        ("extremal cn", vec!["extremal".into(), "cn".into(), "--n".into(), "1-4".into(), "--restarts".into(), "4".into(), "--out".into(), s(at("cn.csv"))], at("cn.csv")),
        ("sharp", vec!["sharp".into(), "--n-list".into(), "11,13".into(), "--out".into(), s(at("sharp.csv"))], at("sharp.csv")),
        ("robust sweep", vec!["robust".into(), "sweep".into(), "--config".into(), s(at("sweep.json")), "--out".into(), s(at("risks.csv"))], at("risks.csv")),
        ("eb regret", vec!["eb".into(), "regret".into(), "--config".into(), s(at("sweep.json")), "--out".into(), s(at("regret.csv"))], at("regret.csv")),
    ];
    for (label, args, out) in &runs {
        replay_matches(label, args, out, &mut checks);
    }
    let note = format!("{} commands replayed", runs.len());
    checks.finish(10, "re-run from manifest is byte-identical", started, Duration::from_secs(600), &note);
}
