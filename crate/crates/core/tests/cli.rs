mod common;

use std::path::Path;
use std::process::{Command, Output};

fn gridchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridchain")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_verify_audit_round_trip() {
    let out = tempfile::tempdir().unwrap();
    let config = common::fixture_config("p2p");
    let r = gridchain(&["run", "--config", path(&config), "--seed", "3", "--out", path(out.path())]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    for file in ["ledger.bin", "genesis.json", "report.json", "prosumers.csv", "clearings.csv"] {
        assert!(out.path().join(file).exists(), "{file}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 3);

    let ledger = out.path().join("ledger.bin");
    let genesis = out.path().join("genesis.json");
    let v = gridchain(&["verify", "--ledger", path(&ledger), "--genesis", path(&genesis)]);
    assert_eq!(v.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(body["ok"], true);

    let a = gridchain(&["audit", "--ledger", path(&ledger)]);
    assert_eq!(a.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(body["discrepancies"].as_array().unwrap().len(), 0);

    let mut bytes = std::fs::read(&ledger).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&ledger, bytes).unwrap();
    let v = gridchain(&["verify", "--ledger", path(&ledger), "--genesis", path(&genesis)]);
    assert_eq!(v.status.code(), Some(1));
    let body: serde_json::Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(body["ok"], false);
    assert!(body["failure"]["height"].as_u64().unwrap() > 0);
}

#[test]
fn oracle_eval_clears_a_book() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("book.json");
    std::fs::write(
        &input,
        r#"{"bids": [{"id": 1, "qty_wh": 100, "limit_price": 300}],
            "offers": [{"id": 2, "qty_wh": 100, "limit_price": 200}]}"#,
    )
    .unwrap();
    let r = gridchain(&["oracle-eval", "--service", "clear", "--input", path(&input)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let body: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(body["clearing_price"], 250);
    assert_eq!(body["total_qty_wh"], 100);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(gridchain(&[]).status.code(), Some(2));
    assert_eq!(gridchain(&["verify", "--ledger", "x"]).status.code(), Some(2));
    assert_eq!(
        gridchain(&["oracle-eval", "--service", "teleport", "--input", "x"]).status.code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let r = gridchain(&["run", "--config", path(&missing), "--out", path(dir.path())]);
    assert_eq!(r.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"scenario": "p2p", "unknown_field": 1}"#).unwrap();
    let r = gridchain(&["run", "--config", path(&bad), "--out", path(dir.path())]);
    assert_eq!(r.status.code(), Some(2));

    let input = dir.path().join("in.json");
    std::fs::write(&input, r#"{"history": "not a list"}"#).unwrap();
    let r = gridchain(&["oracle-eval", "--service", "forecast", "--input", path(&input)]);
    assert_eq!(r.status.code(), Some(2));
}
