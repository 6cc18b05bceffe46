use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use storage_adequacy::config::StudyConfig;
use storage_adequacy::exec::Execution;
use storage_adequacy::model::TimeSeries;
use storage_adequacy::output::{read_study_outputs, read_wide_traces, write_wide_traces};
use storage_adequacy::sizing::run_study;
use storage_adequacy::synthetic::{write_toy_study, ToyOptions};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storage-adequacy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn toy(dir: &Path, n_samples: usize) -> PathBuf {
    write_toy_study(
        dir,
        &ToyOptions {
            n_samples,
            ..ToyOptions::default()
        },
    )
    .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_toy_and_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 10);
    let out = bin(&["validate", s(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    doc["sizing"]["rho"] = serde_json::json!([0.5, 0.6, 0.0]);
    doc["dispatch_params"] = serde_json::json!({"alpha": 1, "gamma": 100});
    std::fs::write(&cfg, doc.to_string()).unwrap();
    let out = bin(&["validate", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/sizing/rho"), "{err}");
    assert!(err.contains("/dispatch_params"), "{err}");
}

#[test]
fn run_writes_files_that_match_the_library_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 50);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = bin(&["run", s(&cfg), "--out", s(out), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["study_result.csv", "boundaries.csv", "capacity_by_year.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
    let study = StudyConfig::load(&cfg).unwrap().build_study().unwrap();
    let report = run_study(&study, Execution::Sequential).unwrap();
    assert_eq!(read_study_outputs(&a).unwrap(), report.result);
}

#[test]
fn run_overrides_and_year_filter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 200);
    let out = dir.path().join("out");
    let o = bin(&["run", s(&cfg), "--out", s(&out), "--samples", "8", "--seed", "5", "--years", "2035"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_study_outputs(&out).unwrap();
    assert_eq!(r.years.len(), 1);
    assert_eq!(r.years[0].year, 2035);
    assert_eq!(r.boundaries.len(), 8 * 2);

    let o = bin(&["run", s(&cfg), "--out", s(&out), "--years", "1999"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_trace_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 4);
    let gone = dir.path().join("traces").join("solar_south_2003.csv");
    std::fs::remove_file(&gone).unwrap();
    let o = bin(&["run", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solar_south_2003.csv"));
}

#[test]
fn exceeded_range_is_a_study_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 6);
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    doc["sizing"]["p_grid_max_gw"] = serde_json::json!(1.0);
    doc["years"][1]["peak_demand_gw"] = serde_json::json!(90.0);
    std::fs::write(&cfg, doc.to_string()).unwrap();
    let out = dir.path().join("out");
    let o = bin(&["run", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("top of the search range"));
    // partial results are still written, with NA markers
    let r = read_study_outputs(&out).unwrap();
    assert_eq!(r.years[1].overall_gw, None);
}

fn dispatch(cfg: &Path, trace: &Path, capacity: &str, out: &Path) -> Output {
    bin(&[
        "dispatch",
        s(cfg),
        "--trace",
        s(trace),
        "--capacity",
        capacity,
        "--out",
        s(out),
        "--verify",
    ])
}

#[test]
fn dispatch_edges_and_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 1);
    let net = StudyConfig::load(&cfg).unwrap().network;
    let traces: Vec<TimeSeries> = (0..3)
        .map(|i| {
            let v = (0..365).map(|k| ((k * (i + 2)) % 9) as f64 * 0.25 - 1.25).collect();
            TimeSeries::new(v, 24.0).unwrap()
        })
        .collect();
    let trace = dir.path().join("shortfall.csv");
    write_wide_traces(&trace, &net, &traces).unwrap();

    let out = dir.path().join("zero");
    let o = dispatch(&cfg, &trace, "0", &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let resultant = read_wide_traces(&out.join("resultant.csv"), &net, 24.0).unwrap();
    // without storage, links only share unserved demand out between nodes, so the
    // total is unchanged whenever no node has a surplus
    for k in 0..365 {
        let inputs: Vec<f64> = traces.iter().map(|t| t.values()[k]).collect();
        if inputs.iter().all(|&v| v >= 0.0) {
            let total: f64 = resultant.iter().map(|r| r.values()[k]).sum();
            let expected: f64 = inputs.iter().sum();
            assert!((total - expected).abs() <= 1e-6, "step {k}: {total} vs {expected}");
        }
    }

    let out = dir.path().join("big");
    let o = dispatch(&cfg, &trace, "100", &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("consistent"));
    let resultant = read_wide_traces(&out.join("resultant.csv"), &net, 24.0).unwrap();
    assert!(resultant.iter().all(|t| t.values().iter().all(|&v| v <= 1e-6)));
}

#[test]
fn dispatch_without_storage_or_network_clips_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 1);
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    doc["network"]["edges"] = serde_json::json!([]);
    std::fs::write(&cfg, doc.to_string()).unwrap();
    let net = StudyConfig::load(&cfg).unwrap().network;
    let traces: Vec<TimeSeries> = (0..3)
        .map(|i| TimeSeries::new(vec![1.5 - i as f64, -0.5, 0.0, 2.25], 24.0).unwrap())
        .collect();
    let trace = dir.path().join("shortfall.csv");
    write_wide_traces(&trace, &net, &traces).unwrap();
    let out = dir.path().join("out");
    let o = dispatch(&cfg, &trace, "0", &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let resultant = read_wide_traces(&out.join("resultant.csv"), &net, 24.0).unwrap();
    for (r, t) in resultant.iter().zip(&traces) {
        let clipped: Vec<f64> = t.values().iter().map(|v| v.max(0.0)).collect();
        assert_eq!(r.values(), clipped.as_slice());
    }
}
