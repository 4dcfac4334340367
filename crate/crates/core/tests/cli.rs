//! The `hopsynth` command line, driven in-process against a scripted world.

mod common;

use std::fs;

use common::{cli, full_run, snapshot};
use hopsynth::app::main_from;
use hopsynth::record::{read_dataset, write_dataset};

fn run_dir() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    full_run(d.path()).unwrap();
    d
}

#[test]
fn synth_is_repeatable() {
    let d = run_dir();
    let before = snapshot(d.path());
    assert_eq!(cli(d.path(), &["synth", "bridge", "--budget", "40", "--target", "25"]), 0);
    let after = snapshot(d.path());
    for f in ["out/bridge.jsonl", "out/bridge.ledger.json"] {
        assert_eq!(before[f], after[f], "{f}");
    }
}

#[test]
fn report_has_quality_columns() {
    let d = run_dir();
    let csv = fs::read_to_string(d.path().join("out/report.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..4], ["Dataset", "MultiHop%", "AvgScore", "Items"]);
    assert_eq!(csv.lines().count(), 3, "{csv}");
}

#[test]
fn validate_exit_codes() {
    let d = run_dir();
    let good = d.path().join("out/bridge.jsonl");
    assert_eq!(cli(d.path(), &["validate", good.to_str().unwrap()]), 0);

    let mut recs = read_dataset(&good).unwrap();
    recs[0].answer.clear();
    let bad = d.path().join("bad.jsonl");
    write_dataset(&bad, &recs).unwrap();
    assert_eq!(cli(d.path(), &["validate", bad.to_str().unwrap()]), 1);
    let report = fs::read_to_string(d.path().join("out/validate/bad.json")).unwrap();
    assert!(report.contains("\"answer\""), "{report}");
}

#[test]
fn analysis_commands_succeed() {
    let d = run_dir();
    let ds = d.path().join("out/bridge.jsonl");
    let ds = ds.to_str().unwrap();
    for args in [
        vec!["diagnose", ds],
        vec!["audit-retrieval", ds, "--method", "both"],
        vec!["forge-triples", "--budget", "12"],
        vec!["cost"],
    ] {
        assert_eq!(cli(d.path(), &args), 0, "{args:?}");
    }
    for f in ["out/diagnose/bridge.json", "out/audit/bridge.json", "out/forge/groups.jsonl", "out/cost.json"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(main_from(["hopsynth", "--no-such-flag"]), 2);
    assert_eq!(main_from(["hopsynth", "frobnicate"]), 2);
    assert_eq!(main_from(["hopsynth", "synth"]), 2);
    assert_eq!(main_from(["hopsynth", "--help"]), 0);
}

#[test]
fn bad_config_exits_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(cli(d.path(), &["ingest"]), 2, "missing config");
    fs::write(d.path().join("hopsynth.toml"), "seed = \"seven\"\n").unwrap();
    assert_eq!(cli(d.path(), &["ingest"]), 2, "wrong type");
    fs::write(d.path().join("hopsynth.toml"), "[providers.generator]\napi = \"${HOPSYNTH_SURELY_UNSET}\"\n").unwrap();
    assert_eq!(cli(d.path(), &["ingest"]), 2, "unset variable");
}

#[test]
fn cost_projection() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(main_from(["hopsynth", "init-sim", d.path().to_str().unwrap()]), 0);
    let args = ["cost", "--requests", "7600", "--avg-input", "1529.97", "--avg-output", "231.32", "--price-in", "0.15", "--price-out", "3.5"];
    assert_eq!(cli(d.path(), &args), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/cost.json")).unwrap()).unwrap();
    let usd = v["total_usd"].as_f64().unwrap();
    assert!((usd - 7.8973).abs() < 5e-4, "{usd}");
}
