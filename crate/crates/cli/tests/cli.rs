use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cpcgate::calibration::max_stable_gamma;
use cpcgate::config::RawConfig;
use cpcgate::gridio::{load_grid, StoredGrid};
use serde_json::Value;
use sha2::{Digest, Sha256};

const COARSE: &str = r#"{"sigma": 0.2, "dz": 0.01, "gamma": 5.0, "grid": {"half_extent": 10, "points": 201}"#;

fn coarse(extra: &str) -> String {
    if extra.is_empty() {
        format!("{COARSE}}}")
    } else {
        format!("{COARSE}, {extra}}}")
    }
}

fn cpcgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpcgate"))
        .args(args)
        .output()
        .expect("spawn cpcgate")
}

fn ok(args: &[&str]) -> String {
    let o = cpcgate(args);
    assert!(
        o.status.success(),
        "cpcgate {args:?} failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn s1_run_writes_trace_five_snapshots_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s1.json", r#"{"preset": "S1"}"#);
    let out = tmp.path().join("run");
    ok(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);

    let m = manifest(&out);
    let artifacts = m["artifacts"].as_array().unwrap();
    assert_eq!(artifacts.len(), 6);
    let mut files: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files.len(), 7);
    for a in artifacts {
        let p = out.join(a["path"].as_str().unwrap());
        assert_eq!(a["sha256"].as_str().unwrap(), sha(&p));
    }
    let snaps: Vec<f64> = artifacts
        .iter()
        .filter(|a| a["kind"] == "snapshot")
        .map(|a| a["z"].as_f64().unwrap())
        .collect();
    assert_eq!(snaps, vec![-3.5, -1.5, 0.0, 1.5, 3.5]);

    let rows = csv_rows(&out.join("trace.csv"));
    assert_eq!(rows[0].join(","), "z,F,n_si,n_a,front");
    assert_eq!(rows.len(), 1 + 1751);
    let f_end: f64 = rows.last().unwrap()[1].parse().unwrap();
    assert!(f_end > 0.99, "F(L/2) = {f_end}");
    assert_eq!(m["steps"], 1750);
    assert_eq!(m["config"]["gamma"], m["config"]["gamma"].as_f64().unwrap());
    assert_eq!(m["software"]["version"], env!("CARGO_PKG_VERSION"));

    match load_grid(&out.join("snapshot_1.cpcg")).unwrap() {
        StoredGrid::Two(g) => assert_eq!(g.eta_axis().count, 801),
        _ => panic!("expected a 2-D snapshot"),
    }
}

#[test]
fn s3_snapshots_use_primed_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s3.json", &coarse(r#""preset": "S3""#));
    let out = tmp.path().join("run");
    ok(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let m = manifest(&out);
    let labels: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|a| a["label"].as_str())
        .collect();
    assert_eq!(labels, vec!["1p", "2p", "3", "4p", "5p"]);
    assert_eq!(m["config"]["snapshot_zs"], serde_json::json!([-3.5, -0.5, 0.0, 0.5, 3.5]));
}

#[test]
fn invalid_dz_fails_naming_the_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{"dz": 0.05}"#);
    let o = cpcgate(&["run", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("dz <= sigma/(2 max|beta1|)"), "{err}");
}

#[test]
fn unknown_config_key_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{"gamma": 10, "gama": 3}"#);
    let o = cpcgate(&["run", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama"));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &coarse(r#""probes": [[0, 0]], "fidelity_marks": [0.5]"#));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]);
    ok(&["--workers", "1", "run", "--config", &cfg, "--out", b.to_str().unwrap()]);
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config_digest"], mb["config_digest"]);
    assert_eq!(ma["artifacts"], mb["artifacts"]);
    assert_eq!(sha(&a.join("trace.csv")), sha(&b.join("trace.csv")));
    // trace, five snapshots, one fidelity-mark snapshot, probes
    assert_eq!(ma["artifacts"].as_array().unwrap().len(), 8);
}

#[test]
fn manifest_config_echo_resolves_to_the_same_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &coarse(""));
    let a = tmp.path().join("a");
    ok(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]);
    let echoed = write_config(
        tmp.path(),
        "echo.json",
        &serde_json::to_string(&manifest(&a)["config"]).unwrap(),
    );
    let b = tmp.path().join("b");
    ok(&["run", "--config", &echoed, "--out", b.to_str().unwrap()]);
    assert_eq!(manifest(&a)["config_digest"], manifest(&b)["config_digest"]);
    assert_eq!(sha(&a.join("trace.csv")), sha(&b.join("trace.csv")));
}

#[test]
fn single_value_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run_cfg = write_config(tmp.path(), "r.json", &coarse(""));
    let sweep_cfg = write_config(tmp.path(), "s.json", &coarse(r#""sweep": {"gamma": [5.0]}"#));
    let r = tmp.path().join("run");
    let s = tmp.path().join("sweep");
    ok(&["run", "--config", &run_cfg, "--out", r.to_str().unwrap()]);
    ok(&["sweep", "--config", &sweep_cfg, "--out", s.to_str().unwrap()]);
    assert_eq!(sha(&r.join("trace.csv")), sha(&s.join("point_000/trace.csv")));
    let rows = csv_rows(&s.join("summary.csv"));
    assert_eq!(rows[0].join(","), "point,gamma,F,n_a,status");
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][4], "ok");
}

#[test]
fn empty_sweep_range_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", &coarse(r#""sweep": {"gamma": []}"#));
    let o = cpcgate(&["sweep", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
}

#[test]
fn sweep_records_failed_points_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", &coarse(r#""sweep": {"dz": [0.01, 0.03]}"#));
    let out = tmp.path().join("sweep");
    ok(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",ok"));
    assert!(lines[2].contains("dz divides L"), "{}", lines[2]);
}

#[test]
fn gamma_scan_peaks_next_to_calibrated_gamma() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &coarse(""));
    let cal = tmp.path().join("cal");
    let printed = ok(&["calibrate", "--config", &cfg, "--out", cal.to_str().unwrap(), "--tol", "0.01"]);
    for name in ["gamma_0", "gamma_*", "gamma_**"] {
        assert!(printed.contains(name), "{printed}");
    }
    let rows = csv_rows(&cal.join("calibration.csv"));
    let value = |name: &str| -> f64 { rows.iter().find(|r| r[0] == name).unwrap()[2].parse().unwrap() };
    let (g_star, g_full) = (value("gamma_*"), value("gamma_**"));

    let resolved = RawConfig::from_json(&coarse("")).unwrap().resolve().unwrap();
    let hi = (4.0 * g_star).min(max_stable_gamma(&resolved.sim) * (1.0 - 1e-9));
    let step = (hi - g_star) / 10.0;
    let gammas: Vec<String> = (0..11).map(|k| format!("{}", g_star + k as f64 * step)).collect();
    let sweep = write_config(
        tmp.path(),
        "s.json",
        &coarse(&format!(r#""sweep": {{"gamma": [{}]}}"#, gammas.join(","))),
    );
    let out = tmp.path().join("scan");
    ok(&["sweep", "--config", &sweep, "--out", out.to_str().unwrap()]);
    let rows = csv_rows(&out.join("summary.csv"));
    assert_eq!(rows.len(), 12);
    let best = rows[1..]
        .iter()
        .max_by(|a, b| a[2].parse::<f64>().unwrap().total_cmp(&b[2].parse::<f64>().unwrap()))
        .unwrap();
    let g_best: f64 = best[1].parse().unwrap();
    assert!((g_best - g_full).abs() <= step + 1e-9, "scan peak {g_best}, gamma_** {g_full}");
}

#[test]
fn ensemble_run_writes_branches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "e.json",
        &format!(
            r#"{{"sigma": 0.2, "dz": 0.01, "gamma": 5.0, "grid": {{"half_extent": 10, "points": 201}},
               "ensemble": {{"branches": [{{"weight": 0.25, "preset": "S1"}}, {{"weight": 0.75, "preset": "S2"}}]}}}}"#
        ),
    );
    let out = tmp.path().join("ens");
    ok(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(out.join("ensemble.csv").exists());
    assert!(out.join("branch_1/trace.csv").exists());
    let m = manifest(&out);
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 1 + 2 * 6);
}

#[test]
fn coherence_reports_t4_and_slowness() {
    let out = ok(&["coherence"]);
    assert!(out.contains("T4"), "{out}");
    assert!(out.contains("slowness_margin"), "{out}");
    let t4: f64 = out
        .lines()
        .find(|l| l.starts_with("T4"))
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(t4 > 0.5 && t4 < 4.0, "{t4}");
}

#[test]
fn coherence_of_a_stored_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &coarse(""));
    let out = tmp.path().join("run");
    ok(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let grid = out.join("snapshot_5.cpcg");
    let printed = ok(&["coherence", "--config", &cfg, "--grid", grid.to_str().unwrap()]);
    assert!(printed.contains("T4"));
}

#[test]
fn units_requires_the_pump_wavelength() {
    let o = cpcgate(&["units"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda_p"));
}

#[test]
fn units_example_flags_assumptions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["units", "--assume-example", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.contains("ASSUMED"));
    assert!(out.contains("1466.47"), "{out}");
    assert!(out.contains("1947.02"), "{out}");
    let csv = fs::read_to_string(tmp.path().join("units.csv")).unwrap();
    assert!(csv.starts_with("quantity,value,unit,source"));
}

#[test]
fn units_explicit_inputs_need_no_assumptions() {
    let out = ok(&["units", "--lambda-p", "1.55e-6", "--area", "2e-12"]);
    assert!(!out.contains("ASSUMED"));
}

#[test]
fn presets_lists_all_four() {
    let out = ok(&["presets"]);
    for p in ["S1", "S2", "S3", "S4"] {
        assert!(out.contains(p));
    }
}

#[test]
fn seedless_flag_is_accepted() {
    ok(&["--seedless", "presets"]);
}
