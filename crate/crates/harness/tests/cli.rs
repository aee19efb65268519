use std::ffi::OsString;
use std::path::Path;

use anm_harness::cli::{main_with, DataFile};
use anm_modal::atomcore::steering;
use anm_modal::{CMatrix, C64};

fn run(args: &[&str]) -> (i32, String, String) {
    let argv: Vec<OsString> = std::iter::once("anm").chain(args.iter().copied()).map(OsString::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn list_presets() {
    let (code, out, _) = run(&["list-presets"]);
    assert_eq!(code, 0);
    let names: Vec<&str> = out.lines().collect();
    assert_eq!(names.len(), 7);
    assert!(names.contains(&"temporal-K-scaling"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["run", "no-such-preset"]).0, 2);
    assert_eq!(run(&["run", "boxcar-uniform", "--bogus"]).0, 2);
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn missing_file_exits_1() {
    let (code, _, err) = run(&["modes", "/nonexistent/system.json"]);
    assert_eq!(code, 1);
    assert!(!err.is_empty());
}

#[test]
fn show_preset_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let (code, json, _) = run(&["show-preset", "boxcar-uniform"]);
    assert_eq!(code, 0);
    let cfg = dir.path().join("boxcar.json");
    std::fs::write(&cfg, json).unwrap();
    let out = dir.path().join("r.csv");
    assert_eq!(run(&["run", path(&cfg), "--out", path(&out)]).0, 0);
    assert!(out.exists());
}

#[test]
fn run_writes_rows_and_summary_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let (code, out, err) = run(&["run", "boxcar-uniform", "--seed", "42", "--out", path(p), "--threads", "1"]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("wrote"));
    }
    let read = |p: &Path| {
        let mut r = csv::Reader::from_path(p).unwrap();
        let h = r.headers().unwrap().clone();
        let wall = h.iter().position(|c| c == "wall_ms").unwrap();
        let rows: Vec<Vec<String>> = r
            .records()
            .map(|rec| rec.unwrap().iter().enumerate().filter(|(i, _)| *i != wall).map(|(_, s)| s.to_string()).collect())
            .collect();
        (h, rows)
    };
    let (h, rows) = read(&a);
    assert_eq!(&h[0], "preset");
    assert!(h.iter().any(|c| c == "mac_6"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows, read(&b).1);
    let summary = dir.path().join("a.summary.csv");
    assert_eq!(csv::Reader::from_path(summary).unwrap().records().count(), 2);
}

#[test]
fn modes_of_the_boxcar() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.json");
    std::fs::write(&sys, r#"{"masses": [1,2,3,4,5,6], "springs": [500,150,100,50,100,150,500]}"#).unwrap();
    let (code, out, _) = run(&["modes", path(&sys)]);
    assert_eq!(code, 0);
    assert!(out.contains("0.5384") && out.contains("4.1218"), "{out}");
    assert_eq!(out.lines().count(), 7);
}

#[test]
fn solve_recovers_two_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let (m, n) = (24, 3);
    let a = steering(0.2, m).unwrap();
    let b = steering(0.55, m).unwrap();
    let x: CMatrix = &a * CMatrix::from_row_slice(1, n, &[C64::new(1.0, 0.0), C64::new(-0.5, 0.2), C64::new(0.3, 0.0)])
        + &b * CMatrix::from_row_slice(1, n, &[C64::new(0.0, 0.7), C64::new(0.4, 0.0), C64::new(0.5, -0.5)]);
    let data = dir.path().join("x.json");
    std::fs::write(&data, serde_json::to_string(&DataFile::from_matrix(&x)).unwrap()).unwrap();
    let report = dir.path().join("report.json");
    let (code, _, err) = run(&["solve", path(&data), "--scheme", "sync", "--budget", "16", "--seed", "3", "--out", path(&report)]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let f: Vec<f64> = v["frequencies"].as_array().unwrap().iter().map(|f| f.as_f64().unwrap()).collect();
    assert_eq!(f.len(), 2, "{v}");
    assert!((f[0] - 0.2).abs() < 1e-3 && (f[1] - 0.55).abs() < 1e-3, "{f:?}");
    assert_eq!(v["measurements"], 16 * n);
    assert_eq!(v["certificate_passed"], true);
}
