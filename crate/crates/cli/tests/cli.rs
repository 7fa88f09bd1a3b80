use std::path::Path;
use std::process::Command;

use hamcycle::count::enumerate_cycles;
use hamcycle::tn::Mps;
use hamcycle::{DualConfig, LatticeShape};
use serde_json::Value;

fn run(args: &[&str]) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_hamcycle"))
        .args(args)
        .output()
        .expect("spawn hamcycle");
    assert!(
        out.status.success(),
        "hamcycle {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("envelope json")
}

fn run_err(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_hamcycle"))
        .args(args)
        .output()
        .unwrap();
    assert!(!out.status.success(), "expected failure for {args:?}");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn count_methods() {
    let e = run(&["count", "--shape", "6x8", "--method", "transfer"]);
    assert_eq!(e["payload"]["count"], "32675");
    assert_eq!(e["module"], "count");
    assert_eq!(e["config"]["shape"]["m"], 6);

    let e = run(&["count", "--shape", "3x5", "--method", "brute"]);
    assert_eq!(e["payload"]["count"], "0");

    let e = run(&["count", "--shape", "4x4", "--method", "both"]);
    assert_eq!(e["payload"]["count"], "6");
    assert_eq!(e["payload"]["agree"], true);
    assert_eq!(e["payload"]["results"].as_array().unwrap().len(), 2);
}

#[test]
fn count_cap_is_reported() {
    let err = run_err(&["count", "--shape", "8x8", "--method", "brute"]);
    assert!(err.contains("limit"), "{err}");
}

#[test]
fn count_table_appends_with_one_header() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    run(&["count", "--shape", "4x4", "--method", "both", "--table", p(&table)]);
    run(&["count", "--shape", "6x6", "--table", p(&table)]);
    let text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema=hamcycle-count/1");
    assert_eq!(lines[1], "m,n,method,count,ms");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("6,6,transfer,1072,"));
}

#[test]
fn dmrg_ladder_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("ladder.mps.json");
    let out = dir.path().join("env.json");
    let e = run(&[
        "dmrg", "--shape", "2x8", "--chi", "8", "--checkpoint", p(&cp), "--out", p(&out),
    ]);
    assert!(e["payload"]["energy"].as_f64().unwrap().abs() < 1e-10);
    assert!((e["payload"]["count_estimate"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!(cp.exists());

    let again = run(&["replay", p(&out)]);
    assert_eq!(
        serde_json::to_string(&again["payload"]).unwrap(),
        serde_json::to_string(&e["payload"]).unwrap()
    );
}

#[test]
fn dmrg_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("a.mps.json");
    let args = ["dmrg", "--shape", "4x4", "--chi", "16", "--samples", "200", "--checkpoint", p(&cp)];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(
        serde_json::to_string(&a["payload"]).unwrap(),
        serde_json::to_string(&b["payload"]).unwrap()
    );
    assert!(a["payload"]["rel_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn report_on_exact_and_empty_states() {
    let dir = tempfile::tempdir().unwrap();
    let shape = LatticeShape::new(4, 4).unwrap();
    let cycles = enumerate_cycles(shape, 100).unwrap();
    let exact = dir.path().join("exact.mps.json");
    Mps::uniform_superposition(shape, &cycles, 1e-12)
        .unwrap()
        .save(&exact, 0)
        .unwrap();
    let csv = dir.path().join("entropy.csv");
    let e = run(&["report", "--checkpoint", p(&exact), "--entropy-csv", p(&csv)]);
    assert_eq!(e["payload"]["samples"], 1000);
    assert_eq!(e["payload"]["multiloop_prob"].as_f64().unwrap(), 0.0);
    assert_eq!(e["payload"]["mean_cycles"].as_f64().unwrap(), 1.0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# schema=hamcycle-quality/1\n"));

    let empty = dir.path().join("empty.mps.json");
    Mps::product(&DualConfig::zeros(shape)).save(&empty, 1).unwrap();
    let e = run(&["report", "--checkpoint", p(&empty)]);
    assert_eq!(e["payload"]["multiloop_prob"].as_f64().unwrap(), 1.0);
}

#[test]
fn corrupt_checkpoint_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format\": \"hamcycle-mps\", \"tensors\": 3}").unwrap();
    let err = run_err(&["report", "--checkpoint", p(&bad)]);
    assert!(err.contains("format error"), "{err}");
}

#[test]
fn protocol_commands() {
    let e = run(&["boltzmann", "--shape", "4x4", "--beta", "0"]);
    assert_eq!(e["payload"]["points"][0]["z_estimate"].as_f64().unwrap(), 6.0);

    let e = run(&["amplify", "--shape", "4x4", "--max-iter", "20"]);
    assert_eq!(e["payload"]["k_opt"], 7);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("terms.csv");
    let e = run(&["dress", "--shape", "2x4", "--seq", "PPHHPPHH", "--csv", p(&csv)]);
    assert_eq!(e["payload"]["term_count"], 16);
    assert_eq!(e["payload"]["uniform"], true);
    assert!((e["payload"]["amplitude"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2 + 16);

    let err = run_err(&["dress", "--shape", "2x4", "--seq", "PPH"]);
    assert!(err.contains("does not match"), "{err}");
}

#[test]
fn bench_writes_versioned_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let e = run(&[
        "bench", "--shapes", "4x4,4x6", "--chis", "8,16", "--target-eps", "0.005", "--csv", p(&csv),
    ]);
    let best = e["payload"]["best"].as_array().unwrap();
    assert_eq!(best.len(), 2);
    assert!(best.iter().all(|b| b["chi"].is_u64()));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema=hamcycle-bench/1"));
    assert_eq!(lines.next(), Some("n,chi,seconds,m,eps,reached"));
}
