use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use gmdl::manifest::{sha256_hex, RunManifest};
use gmdl::report::build_report;
use gmdl_core::bounds::{compute_c0, j_transfer};

fn gmdl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gmdl")).args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    gmdl(args).status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL_SWEEP: &str =
    r#"{"M":1,"d":1,"eta":0.1,"epsilons":[0,0.1],"ns":[200,800],"replicates":4,"seed":3}"#;

#[test]
fn identical_measures_have_zero_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "pi.json", r#"{"d":1,"M":1,"atoms":[[-0.5],[0.5]],"weights":[0.5,0.5]}"#);
    let out = gmdl(&["div", "--kind", "TV", path_str(&m), path_str(&m)]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["value"].as_f64(), Some(0.0));
    assert_eq!(json["kind"], "TV");
}

#[test]
fn malformed_measure_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"d":2,"M":1,"atoms":[[0.1]],"weights":[1]}"#);
    assert_eq!(code(&["div", "--kind", "H", path_str(&bad), path_str(&bad)]), 1);
}

#[test]
fn usage_errors_and_version() {
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["sharp", "--n-list", "12"]), 1);
}

#[test]
fn sharp_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sharp.csv");
    assert_eq!(code(&["sharp", "--n-list", "11", "--out", path_str(&out)]), 0);
    let mut rows = csv::Reader::from_path(&out).unwrap();
    let headers = rows.headers().unwrap().clone();
    let margin_col = headers.iter().position(|h| h == "margin").unwrap();
    let row = rows.records().next().unwrap().unwrap();
    assert!(row[margin_col].parse::<f64>().unwrap() >= 0.0);
    assert_eq!(code(&["sharp", "--n-list", "31", "--precision", "double"]), 3);
}

#[test]
fn manifest_hashes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("consts.json");
    assert_eq!(code(&["bounds", "constants", "--delta", "1", "--M", "1", "--d", "2", "--out", path_str(&out)]), 0);
    let manifest = RunManifest::read(&RunManifest::sidecar(&out)).unwrap();
    assert_eq!(manifest.outputs.len(), 1);
    assert_eq!(manifest.outputs[0].sha256, sha256_hex(&std::fs::read(&out).unwrap()));
    assert_eq!(manifest.command, "bounds constants");
}

#[test]
fn replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "sweep.json", SMALL_SWEEP);
    let out = dir.path().join("risks.csv");
    assert_eq!(gmdl::run(["gmdl", "robust", "sweep", "--config", path_str(&config), "--out", path_str(&out)]), 0);
    let first = std::fs::read(&out).unwrap();
    std::fs::remove_file(&out).unwrap();
    let manifest = RunManifest::sidecar(&out);
    assert_eq!(gmdl::run(["gmdl", "replay", path_str(&manifest)]), 0);
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn empty_report_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let plots = dir.path().join("plots");
    assert!(build_report(&[], &plots, 1.0).unwrap().is_empty());
    assert!(!plots.exists());
}

#[test]
fn risk_report_has_one_curve_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "sweep.json", SMALL_SWEEP);
    let risks = dir.path().join("risks.csv");
    assert_eq!(gmdl::run(["gmdl", "robust", "sweep", "--config", path_str(&config), "--out", path_str(&risks)]), 0);
    let plots = dir.path().join("plots");
    let written = build_report(&[risks], &plots, 1.0).unwrap();
    let curves = written.iter().find(|p| p.file_name().unwrap() == "risk_curves.csv").expect("risk curves");
    let mut series = BTreeSet::new();
    for row in csv::Reader::from_path(curves).unwrap().records() {
        series.insert(row.unwrap()[1].to_string());
    }
    let tv: Vec<&String> = series.iter().filter(|s| s.starts_with("tv2_mean")).collect();
    let h: Vec<&String> = series.iter().filter(|s| s.starts_with("h2_mean")).collect();
    assert_eq!((tv.len(), h.len()), (2, 2), "{series:?}");
}

#[test]
fn envelope_follows_the_transfer_function() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("bounds.csv");
    assert_eq!(code(&["bounds", "verify", "--pairs", "4", "--out", path_str(&table)]), 0);
    let plots = dir.path().join("plots");
    let written = build_report(&[table], &plots, 1.0).unwrap();
    let envelope = written.iter().find(|p| p.file_name().unwrap() == "j_envelope.csv").expect("envelope");
    let mut reader = csv::Reader::from_path(envelope).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (cm, cd, cdelta, ct, cj) = (col("M"), col("d"), col("delta"), col("t"), col("j"));
    let mut seen = 0;
    for row in reader.records() {
        let row = row.unwrap();
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        let bc = compute_c0(f(cdelta), f(cm), f(cd) as usize).unwrap();
        let expected = j_transfer(f(ct), &bc).unwrap();
        let got = f(cj);
        assert!(got == expected || (got - expected).abs() <= 1e-12 * expected.abs(), "{got} vs {expected}");
        seen += 1;
    }
    assert!(seen > 0);
}
