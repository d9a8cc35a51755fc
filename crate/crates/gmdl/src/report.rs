//! Plot-ready data from the CSV tables of the other commands.
//!
//! Every figure gets a tidy long-format CSV (`source,series,x,y,y_err`) and a
//! gnuplot `.dat` file with one indexable block per series.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gmdl_core::bounds::{compute_c0, j_transfer, ln_j_transfer, log_grid};

use crate::error::{CliError, CliResult};
use crate::table::{fmt_f64, write_bytes, Table};

/// Range and resolution of the sampled `𝒥` envelope.
pub const ENVELOPE_LO: f64 = 1e-12;
pub const ENVELOPE_HI: f64 = 0.5;
pub const ENVELOPE_POINTS: usize = 121;

/// What produced a CSV, judged by its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TableKind {
    Bounds,
    Extremal,
    Sharp,
    Risk,
    Regret,
}

impl TableKind {
    pub fn detect(table: &Table) -> Option<Self> {
        let has = |c: &str| table.column(c).is_some();
        if has("pair_id") {
            Some(TableKind::Bounds)
        } else if has("monomial_ratio") {
            Some(TableKind::Extremal)
        } else if has("alpha_star") {
            Some(TableKind::Sharp)
        } else if has("regret_mean") {
            Some(TableKind::Regret)
        } else if has("tv2_mean") {
            Some(TableKind::Risk)
        } else {
            None
        }
    }

    fn stem(self) -> &'static str {
        match self {
            TableKind::Bounds => "h_vs_tv",
            TableKind::Extremal => "cn_sandwich",
            TableKind::Sharp => "sharp_margins",
            TableKind::Risk => "risk_curves",
            TableKind::Regret => "regret_curves",
        }
    }
}

/// One plotted point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub source: String,
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub y_err: f64,
}

fn point(source: &str, series: String, x: f64, y: f64, y_err: f64) -> Point {
    Point { source: source.to_string(), series, x, y, y_err }
}

fn tidy(points: &[Point]) -> Table {
    let mut t = Table::new(&["source", "series", "x", "y", "y_err"]);
    for p in points {
        t.push(vec![p.source.clone(), p.series.clone(), fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.y_err)]);
    }
    t
}

/// Blocks in first-appearance order, separated by two blank lines for `index`.
fn gnuplot(points: &[Point]) -> Vec<u8> {
    let mut order: Vec<(&str, &str)> = Vec::new();
    for p in points {
        if !order.contains(&(p.source.as_str(), p.series.as_str())) {
            order.push((&p.source, &p.series));
        }
    }
    let mut out = String::new();
    for (i, (source, series)) in order.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# {source} {series}\n# x y y_err\n"));
        for p in points.iter().filter(|p| p.source == *source && p.series == *series) {
            out.push_str(&format!("{} {} {}\n", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.y_err)));
        }
    }
    out.into_bytes()
}

fn source_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn bounds_points(source: &str, t: &Table, path: &Path) -> CliResult<Vec<Point>> {
    let (d, m) = (t.floats("d", path)?, t.floats("M", path)?);
    let (tv, h, chi) = (t.floats("TV", path)?, t.floats("H", path)?, t.floats("chi", path)?);
    let mut out = Vec::new();
    for i in 0..tv.len() {
        let tag = format!("d={} M={}", d[i], m[i]);
        out.push(point(source, format!("H {tag}"), tv[i], h[i], 0.0));
        out.push(point(source, format!("chi {tag}"), tv[i], chi[i], 0.0));
    }
    Ok(out)
}

/// `𝒥` on the envelope grid for every `(M, d, δ)` present in a bounds table.
fn envelope(source: &str, t: &Table, path: &Path, delta: f64) -> CliResult<Table> {
    let (d, m) = (t.floats("d", path)?, t.floats("M", path)?);
    let deltas = if t.column("delta").is_some() { t.floats("delta", path)? } else { vec![delta; d.len()] };
    let mut keys: BTreeMap<(u64, u64, u64), (f64, usize, f64)> = BTreeMap::new();
    for i in 0..d.len() {
        keys.insert((d[i] as u64, m[i].to_bits(), deltas[i].to_bits()), (m[i], d[i] as usize, deltas[i]));
    }
    let mut out = Table::new(&["source", "M", "d", "delta", "t", "ln_j", "j"]);
    for (m, d, delta) in keys.into_values() {
        let bc = compute_c0(delta, m, d)?;
        for tv in log_grid(ENVELOPE_LO, ENVELOPE_HI, ENVELOPE_POINTS) {
            out.push(vec![
                source.to_string(),
                fmt_f64(m),
                d.to_string(),
                fmt_f64(delta),
                fmt_f64(tv),
                fmt_f64(ln_j_transfer(tv, &bc)?),
                fmt_f64(j_transfer(tv, &bc)?),
            ]);
        }
    }
    Ok(out)
}

fn extremal_points(source: &str, t: &Table, path: &Path) -> CliResult<Vec<Point>> {
    let n = t.floats("n", path)?;
    let d = t.floats("d", path)?;
    let mut out = Vec::new();
    for col in ["lower", "estimate", "monomial_ratio"] {
        for (i, y) in t.floats(col, path)?.into_iter().enumerate() {
            if y.is_finite() {
                out.push(point(source, format!("{col} d={}", d[i]), n[i], y, 0.0));
            }
        }
    }
    Ok(out)
}

fn sharp_points(source: &str, t: &Table, path: &Path) -> CliResult<Vec<Point>> {
    let n = t.floats("n", path)?;
    let mut out = Vec::new();
    for col in ["margin", "rate", "alpha_star"] {
        for (i, y) in t.floats(col, path)?.into_iter().enumerate() {
            out.push(point(source, col.to_string(), n[i], y, 0.0));
        }
    }
    Ok(out)
}

/// One curve in `n` per `ε` for each `(mean, se)` column pair.
fn curves(source: &str, t: &Table, path: &Path, columns: &[(&str, Option<&str>)]) -> CliResult<Vec<Point>> {
    let eps = t.floats("epsilon", path)?;
    let n = t.floats("n", path)?;
    let mut out = Vec::new();
    for (mean, se) in columns {
        let y = t.floats(mean, path)?;
        let err = match se {
            Some(c) => t.floats(c, path)?,
            None => vec![0.0; y.len()],
        };
        for i in 0..y.len() {
            out.push(point(source, format!("{mean} eps={}", eps[i]), n[i], y[i], err[i]));
        }
    }
    Ok(out)
}

fn write_pair(out_dir: &Path, stem: &str, points: &[Point], written: &mut Vec<PathBuf>) -> CliResult<()> {
    let csv = out_dir.join(format!("{stem}.csv"));
    tidy(points).write(&csv)?;
    let dat = out_dir.join(format!("{stem}.dat"));
    write_bytes(&dat, &gnuplot(points))?;
    written.push(csv);
    written.push(dat);
    Ok(())
}

/// Reads every input, groups points by table kind and writes the figure data.
/// Returns the written paths; an empty input list writes nothing.
pub fn build_report(inputs: &[PathBuf], out_dir: &Path, delta: f64) -> CliResult<Vec<PathBuf>> {
    let mut groups: BTreeMap<TableKind, Vec<Point>> = BTreeMap::new();
    let mut envelopes: Option<Table> = None;
    for path in inputs {
        let table = Table::read(path)?;
        let kind = TableKind::detect(&table)
            .ok_or_else(|| CliError::Csv { path: path.clone(), message: String::from("header not produced by gmdl") })?;
        let source = source_name(path);
        let points = match kind {
            TableKind::Bounds => {
                let env = envelope(&source, &table, path, delta)?;
                match envelopes.as_mut() {
                    Some(all) => all.rows.extend(env.rows),
                    None => envelopes = Some(env),
                }
                bounds_points(&source, &table, path)?
            }
            TableKind::Extremal => extremal_points(&source, &table, path)?,
            TableKind::Sharp => sharp_points(&source, &table, path)?,
            TableKind::Risk => curves(&source, &table, path, &[("tv2_mean", Some("tv2_se")), ("h2_mean", Some("h2_se"))])?,
            TableKind::Regret => curves(&source, &table, path, &[("regret_mean", Some("regret_se")), ("floor_mean", None)])?,
        };
        groups.entry(kind).or_default().extend(points);
    }
    let mut written = Vec::new();
    for (kind, points) in &groups {
        write_pair(out_dir, kind.stem(), points, &mut written)?;
    }
    if let Some(env) = envelopes {
        let csv = out_dir.join("j_envelope.csv");
        env.write(&csv)?;
        written.push(csv);
    }
    Ok(written)
}
