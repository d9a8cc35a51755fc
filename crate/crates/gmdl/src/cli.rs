//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use gmdl_core::bounds::{compute_c0, random_pair, TheoremConstants};
use gmdl_core::divergences::{divergence, DivergenceKind, DivergenceResult, QuadratureSpec};
use gmdl_core::ebayes::regret_experiment;
use gmdl_core::extremal::{estimate_cn, monomial_ratio_closed};
use gmdl_core::robust::{build_covering, risk_sweep};
use gmdl_core::sharpness::verify_sharpness;
use gmdl_core::{PrecisionRequest, Tier};
use serde::Serialize;
use serde_json::json;

use crate::config::{read_json, read_measure, RegretFile, SweepFile};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::report::build_report;
use crate::table::{fmt_f64, write_bytes, Table};

/// Tolerances for the Monte Carlo commands, where sampling noise dominates.
fn experiment_quad() -> QuadratureSpec {
    QuadratureSpec::default().with_tol(1e-12, 1e-9)
}

#[derive(Debug, Parser)]
#[command(name = "gmdl", version, about = "Divergences, sharp examples and robust estimation for Gaussian location mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Divergence between two mixing-measure JSON files.
    Div(DivArgs),
    /// Constants and the TV-to-χ² inequalities.
    #[command(subcommand)]
    Bounds(BoundsCommand),
    /// Extremal L¹/L² ratios of polynomials.
    #[command(subcommand)]
    Extremal(ExtremalCommand),
    /// The Chebyshev-node family of near-extremal pairs.
    Sharp(SharpArgs),
    /// Contaminated sampling and the Yatracos estimator.
    #[command(subcommand)]
    Robust(RobustCommand),
    /// Empirical-Bayes denoising.
    #[command(subcommand)]
    Eb(EbCommand),
    /// Plot-ready tables from CSV outputs of the other commands.
    Report(ReportArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct DivArgs {
    /// TV, H, H2, CHI2 or KL.
    #[arg(long, default_value = "TV")]
    pub kind: DivergenceKind,
    /// Absolute quadrature tolerance.
    #[arg(long, default_value_t = 1e-14)]
    pub tol: f64,
    /// Relative quadrature tolerance.
    #[arg(long, default_value_t = 1e-12)]
    pub rel_tol: f64,
    /// auto, double, extended or extended(DIGITS).
    #[arg(long, env = "GMDL_PRECISION", default_value = "auto")]
    pub precision: PrecisionRequest,
    /// First mixing measure.
    pub pi: PathBuf,
    /// Second mixing measure; χ² and KL divide by its density.
    pub eta: PathBuf,
    /// JSON destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BoundsCommand {
    /// Check the three inequalities on the seeded pair suite.
    Verify(VerifyArgs),
    /// Export `C₀` and its minimizers as JSON.
    Constants(ConstantsArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Slack `δ` of the exponent `α(t)`.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Number of seeded random pairs.
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    #[arg(long, default_value_t = 20_240_917)]
    pub seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long = "M", default_value_t = 1.0)]
    pub m: f64,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ExtremalCommand {
    /// Sandwich `c_{n,d}` between its lower bound and the optimizer.
    Cn(CnArgs),
}

#[derive(Debug, Args)]
pub struct CnArgs {
    /// Degrees, e.g. `1-12` or `3,5,8`.
    #[arg(long, default_value = "1-12")]
    pub n: String,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Optimizer restarts per degree.
    #[arg(long, default_value_t = 64)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SharpArgs {
    /// Odd degrees, e.g. `11,13,15`; even entries of a range such as `11-31` are skipped.
    #[arg(long, default_value = "11,13,15,17,19,21,23,25,27,29,31")]
    pub n_list: String,
    /// Support radius.
    #[arg(long = "M", default_value_t = 1.0)]
    pub m: f64,
    /// Tier of the atom-sum cross-check: auto, double, extended or extended(DIGITS).
    #[arg(long, env = "GMDL_PRECISION", default_value = "auto")]
    pub precision: PrecisionRequest,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for one `sharp_nN.json` bundle per degree N.
    #[arg(long)]
    pub bundle_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RobustCommand {
    /// Risk of the Yatracos estimator over an (ε, n) grid.
    Sweep(ConfigArgs),
}

#[derive(Debug, Subcommand)]
pub enum EbCommand {
    /// Regret of the floored plug-in Tweedie denoiser over an (ε, n) grid.
    Regret(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// CSV files written by `bounds verify`, `extremal cn`, `sharp`, `robust sweep` or `eb regret`.
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "plots")]
    pub out_dir: PathBuf,
    /// `δ` of the transfer envelope.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A `*.manifest.json` written next to an output.
    pub manifest: PathBuf,
}

/// Parses `argv` (program name first), runs it and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let recorded: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let outcome = match cli.command {
        Command::Replay(args) => return replay(&args.manifest),
        command => execute(command, &recorded),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gmdl: {e}");
            e.exit_code()
        }
    }
}

fn replay(path: &Path) -> i32 {
    match RunManifest::read(path) {
        Ok(m) => run(std::iter::once(String::from("gmdl")).chain(m.argv)),
        Err(e) => {
            eprintln!("gmdl: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, argv: &[String]) -> CliResult<()> {
    match command {
        Command::Div(a) => div(a, argv),
        Command::Bounds(BoundsCommand::Verify(a)) => bounds_verify(a, argv),
        Command::Bounds(BoundsCommand::Constants(a)) => bounds_constants(a, argv),
        Command::Extremal(ExtremalCommand::Cn(a)) => extremal_cn(a, argv),
        Command::Sharp(a) => sharp(a, argv),
        Command::Robust(RobustCommand::Sweep(a)) => robust_sweep(a, argv),
        Command::Eb(EbCommand::Regret(a)) => eb_regret(a, argv),
        Command::Report(a) => report(a, argv),
        Command::Replay(_) => unreachable!("handled before dispatch"),
    }
}

/// Writes `bytes` to `out` with a manifest sidecar, or to stdout.
fn emit(out: Option<&Path>, bytes: &[u8], manifest: &mut RunManifest) -> CliResult<()> {
    match out {
        Some(path) => {
            write_bytes(path, bytes)?;
            manifest.record(path)?;
            manifest.write(&RunManifest::sidecar(path))
        }
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    // every serialized type here is plain data with string keys
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text.into_bytes()
}

/// Parses `3,5,8`, `1-12` or a mixture of both.
pub fn parse_list(spec: &str) -> CliResult<Vec<u32>> {
    let bad = || CliError::Usage(format!("cannot parse degree list {spec:?}"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
                let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
                if lo > hi {
                    return Err(bad());
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn request_tier(request: PrecisionRequest) -> Tier {
    match request {
        PrecisionRequest::Auto => Tier::Double,
        PrecisionRequest::Fixed(t) => t,
    }
}

#[derive(Serialize)]
struct DivOutput {
    kind: String,
    #[serde(flatten)]
    result: DivergenceResult,
}

fn div(a: DivArgs, argv: &[String]) -> CliResult<()> {
    let pi = read_measure(&a.pi)?;
    let eta = read_measure(&a.eta)?;
    let tier = request_tier(a.precision);
    let quad = QuadratureSpec::default().with_tol(a.tol, a.rel_tol).with_precision(tier);
    let result = divergence(a.kind, &pi, &eta, &quad)?;
    let config = json!({"kind": a.kind.to_string(), "pi": pi, "eta": eta, "tol": a.tol, "rel_tol": a.rel_tol});
    let mut manifest = RunManifest::new("div", argv, &config, None, tier.to_string());
    emit(a.out.as_deref(), &to_json(&DivOutput { kind: a.kind.to_string(), result }), &mut manifest)
}

fn bounds_verify(a: VerifyArgs, argv: &[String]) -> CliResult<()> {
    let quad = QuadratureSpec::default();
    let mut table = Table::new(&[
        "pair_id",
        "d",
        "M",
        "delta",
        "TV",
        "H",
        "chi",
        "lhs",
        "rhs",
        "ln_rhs",
        "margin",
        "tolerance",
        "norm_lhs",
        "norm_ln_rhs",
        "norm_margin",
        "hellinger_lhs",
        "hellinger_ln_rhs",
        "hellinger_margin",
        "violated",
    ]);
    let mut failures = Vec::new();
    let mut constants: Vec<((usize, u64), TheoremConstants)> = Vec::new();
    for id in 0..a.pairs {
        let pair = random_pair(a.seed, id)?;
        let key = (pair.d, pair.m.to_bits());
        let c = match constants.iter().find(|(k, _)| *k == key) {
            Some((_, c)) => *c,
            None => {
                let c = TheoremConstants::new(a.delta, pair.m, pair.d)?;
                constants.push((key, c));
                c
            }
        };
        let r = gmdl_core::bounds::verify_main_theorem_with(&pair.pi, &pair.eta, &c, &quad)?;
        if r.violated() {
            failures.push(id.to_string());
        }
        table.push(vec![
            id.to_string(),
            pair.d.to_string(),
            fmt_f64(pair.m),
            fmt_f64(a.delta),
            fmt_f64(r.tv),
            fmt_f64(r.h),
            fmt_f64(r.chi2.sqrt()),
            fmt_f64(r.chi.lhs),
            fmt_f64(r.chi.rhs),
            fmt_f64(r.chi.ln_rhs),
            fmt_f64(r.chi.margin),
            fmt_f64(r.chi.tolerance),
            fmt_f64(r.norm.lhs),
            fmt_f64(r.norm.ln_rhs),
            fmt_f64(r.norm.margin),
            fmt_f64(r.hellinger.lhs),
            fmt_f64(r.hellinger.ln_rhs),
            fmt_f64(r.hellinger.margin),
            r.violated().to_string(),
        ]);
    }
    let config = json!({"delta": a.delta, "pairs": a.pairs, "seed": a.seed});
    let mut manifest = RunManifest::new("bounds verify", argv, &config, Some(a.seed), Tier::Double.to_string());
    emit(a.out.as_deref(), &table.to_bytes(), &mut manifest)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation { count: failures.len(), detail: format!("pairs {}", failures.join(",")) })
    }
}

fn bounds_constants(a: ConstantsArgs, argv: &[String]) -> CliResult<()> {
    let bc = compute_c0(a.delta, a.m, a.d)?;
    let config = json!({"delta": a.delta, "M": a.m, "d": a.d});
    let mut manifest = RunManifest::new("bounds constants", argv, &config, None, Tier::Double.to_string());
    emit(a.out.as_deref(), &to_json(&bc), &mut manifest)
}

fn extremal_cn(a: CnArgs, argv: &[String]) -> CliResult<()> {
    let ns = parse_list(&a.n)?;
    let mut table = Table::new(&["n", "d", "lower", "estimate", "monomial_ratio", "monomial_closed", "sandwich"]);
    let mut failures = Vec::new();
    for &n in &ns {
        let est = estimate_cn(n, a.d, a.restarts, a.seed)?;
        let closed = if a.d == 1 { monomial_ratio_closed(n) } else { f64::NAN };
        let lower_ok = est.lower_bound.is_none_or(|lo| lo <= est.estimate * (1.0 + 1e-9));
        let upper_ok = est.estimate <= est.monomial_ratio * (1.0 + 1e-9);
        if !(lower_ok && upper_ok) {
            failures.push(n.to_string());
        }
        table.push(vec![
            n.to_string(),
            a.d.to_string(),
            est.lower_bound.map_or_else(|| "NaN".to_string(), fmt_f64),
            fmt_f64(est.estimate),
            fmt_f64(est.monomial_ratio),
            fmt_f64(closed),
            (lower_ok && upper_ok).to_string(),
        ]);
    }
    let config = json!({"n": ns, "d": a.d, "restarts": a.restarts, "seed": a.seed});
    let mut manifest = RunManifest::new("extremal cn", argv, &config, Some(a.seed), Tier::Double.to_string());
    emit(a.out.as_deref(), &table.to_bytes(), &mut manifest)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation { count: failures.len(), detail: format!("sandwich broken at n = {}", failures.join(",")) })
    }
}

fn sharp(a: SharpArgs, argv: &[String]) -> CliResult<()> {
    let ns: Vec<u32> = parse_list(&a.n_list)?.into_iter().filter(|n| n % 2 == 1).collect();
    if ns.is_empty() {
        return Err(CliError::Usage(String::from("--n-list holds no odd degree")));
    }
    let quad = QuadratureSpec::default();
    let mut table = Table::new(&[
        "n",
        "TV_n",
        "H_n",
        "log_TV_n",
        "log_H_n",
        "alpha_star",
        "margin",
        "rate",
        "tier",
        "digits_lost",
        "failed_checks",
    ]);
    let config = json!({"n": ns, "M": a.m, "precision": a.precision.to_string()});
    let mut manifest = RunManifest::new("sharp", argv, &config, None, a.precision.to_string());
    let mut failures = Vec::new();
    for &n in &ns {
        let r = verify_sharpness(n, a.m, a.precision, &quad)?;
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.holds && !c.asymptotic).map(|c| c.name.as_str()).collect();
        if !r.holds(false) {
            failures.push(format!("n={n}: {}", failed.join(" ")));
        }
        table.push(vec![
            n.to_string(),
            fmt_f64(r.example.tv_n),
            fmt_f64(r.example.h_n),
            fmt_f64(r.ln_tv),
            fmt_f64(r.ln_h),
            fmt_f64(r.alpha_star),
            fmt_f64(r.margin),
            fmt_f64(r.rate),
            r.tier.to_string(),
            fmt_f64(r.digits_lost),
            r.failed_checks().join(" "),
        ]);
        if let Some(dir) = &a.bundle_dir {
            let path = dir.join(format!("sharp_n{n}.json"));
            write_bytes(&path, &to_json(&r))?;
            manifest.record(&path)?;
        }
    }
    emit(a.out.as_deref(), &table.to_bytes(), &mut manifest)?;
    if let (None, Some(dir)) = (&a.out, &a.bundle_dir) {
        manifest.write(&dir.join("sharp.manifest.json"))?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation { count: failures.len(), detail: failures.join("; ") })
    }
}

fn robust_sweep(a: ConfigArgs, argv: &[String]) -> CliResult<()> {
    let file: SweepFile = read_json(&a.config)?;
    if file.d != 1 {
        return Err(CliError::Usage(String::from("robust sweep samples in one dimension only (d = 1)")));
    }
    let covering = build_covering(file.m, file.d, file.eta, file.budget)?;
    let sweep = risk_sweep(&file.to_config()?, &covering, &experiment_quad())?;
    let mut table = Table::new(&[
        "epsilon",
        "n",
        "replicates",
        "tv2_mean",
        "tv2_se",
        "h2_mean",
        "h2_se",
        "dist_mean",
        "hoeffding_radius",
        "hoeffding_violations",
        "yatracos_violations",
        "rate",
        "ln_j_h2",
        "eta_pi",
        "eta_actual",
        "candidates",
    ]);
    for r in &sweep.rows {
        table.push(vec![
            fmt_f64(r.epsilon),
            r.n.to_string(),
            r.replicates.to_string(),
            fmt_f64(r.tv2_mean),
            fmt_f64(r.tv2_se),
            fmt_f64(r.h2_mean),
            fmt_f64(r.h2_se),
            fmt_f64(r.dist_mean),
            fmt_f64(r.hoeffding_radius),
            r.hoeffding_violations.to_string(),
            r.yatracos_violations.to_string(),
            fmt_f64(r.rate),
            fmt_f64(r.ln_j_h2),
            fmt_f64(sweep.eta_pi),
            fmt_f64(covering.eta_actual()),
            covering.len().to_string(),
        ]);
    }
    let config = serde_json::to_value(&file).map_err(|e| CliError::Json { path: a.config.clone(), source: e })?;
    let mut manifest = RunManifest::new("robust sweep", argv, &config, Some(file.seed), Tier::Double.to_string());
    emit(a.out.as_deref(), &table.to_bytes(), &mut manifest)?;
    let broken: usize = sweep.rows.iter().map(|r| r.yatracos_violations).sum();
    if broken == 0 {
        Ok(())
    } else {
        Err(CliError::Violation { count: broken, detail: String::from("Yatracos inequality failed replicate-wise") })
    }
}

fn eb_regret(a: ConfigArgs, argv: &[String]) -> CliResult<()> {
    let file: RegretFile = read_json(&a.config)?;
    if file.sweep.d != 1 {
        return Err(CliError::Usage(String::from("eb regret samples in one dimension only (d = 1)")));
    }
    let covering = build_covering(file.sweep.m, file.sweep.d, file.sweep.eta, file.sweep.budget)?;
    let exp = regret_experiment(&file.sweep.to_config()?, &covering, file.epsilon_term, &experiment_quad())?;
    let mut table = Table::new(&[
        "epsilon",
        "n",
        "replicates",
        "e2",
        "rho",
        "regret_mean",
        "regret_se",
        "estimation_mean",
        "floor_mean",
        "h2_mean",
        "tv2_mean",
        "c_fit",
        "decomposition_violations",
    ]);
    for r in &exp.rows {
        table.push(vec![
            fmt_f64(r.epsilon),
            r.n.to_string(),
            r.replicates.to_string(),
            fmt_f64(r.e2),
            fmt_f64(r.rho),
            fmt_f64(r.regret_mean),
            fmt_f64(r.regret_se),
            fmt_f64(r.estimation_mean),
            fmt_f64(r.floor_mean),
            fmt_f64(r.h2_mean),
            fmt_f64(r.tv2_mean),
            fmt_f64(r.c_fit),
            r.decomposition_violations.to_string(),
        ]);
    }
    let config = serde_json::to_value(&file).map_err(|e| CliError::Json { path: a.config.clone(), source: e })?;
    let mut manifest = RunManifest::new("eb regret", argv, &config, Some(file.sweep.seed), Tier::Double.to_string());
    emit(a.out.as_deref(), &table.to_bytes(), &mut manifest)?;
    let broken: usize = exp.rows.iter().map(|r| r.decomposition_violations).sum();
    if broken == 0 {
        Ok(())
    } else {
        Err(CliError::Violation { count: broken, detail: String::from("regret exceeded its two-term decomposition") })
    }
}

fn report(a: ReportArgs, argv: &[String]) -> CliResult<()> {
    let written = build_report(&a.inputs, &a.out_dir, a.delta)?;
    if written.is_empty() {
        return Ok(());
    }
    let inputs: Vec<String> = a.inputs.iter().map(|p| p.display().to_string()).collect();
    let config = json!({"inputs": inputs, "delta": a.delta});
    let mut manifest = RunManifest::new("report", argv, &config, None, Tier::Double.to_string());
    for path in &written {
        manifest.record(path)?;
    }
    manifest.write(&a.out_dir.join("report.manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_lists() {
        assert_eq!(parse_list("11,13").unwrap(), vec![11, 13]);
        assert_eq!(parse_list("1-3, 7").unwrap(), vec![1, 2, 3, 7]);
        assert!(parse_list("5-2").is_err());
        assert!(parse_list("").is_err());
    }

    #[test]
    fn command_tree_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
