use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comm-energy")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Copy of a fixture with node data replaced.
fn with_data(dir: &Path, name: &str, bits: f64) -> PathBuf {
    let mut doc = read_json(&fixture(name));
    for node in doc["nodes"].as_array_mut().unwrap() {
        node["initial_data"] = bits.into();
    }
    let out = dir.join(name);
    std::fs::write(&out, serde_json::to_string(&doc).unwrap()).unwrap();
    out
}

#[test]
fn solve_writes_a_complete_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = run(&["solve", path(&fixture("two_node_fixed.json")), "--knots", "50", "--out", path(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let csv = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t_s,p_W_1_0,r_bps_1_0,s_bits_1,q_m_1,v_mps_1,F_N_1,p_W_2_0,r_bps_2_0,s_bits_2,q_m_2,v_mps_2,F_N_2"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 51);
    for row in rows {
        let values: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(values.len(), 13);
        assert!(values.iter().all(|v| v.is_finite()));
    }

    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["status"], "optimal");
    assert_eq!(summary["feasibility"]["passed"], true);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "optimal");
    assert_eq!(manifest["config_hash"], summary["config_hash"]);
    assert!(!out.join(".solution.csv.tmp").exists());
}

#[test]
fn oversized_request_exits_with_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = with_data(dir.path(), "single_node.json", 1.5 * 78.1 * 8e6);
    let out = dir.path().join("run");
    let res = run(&["solve", path(&scenario), "--knots", "50", "--out", path(&out)]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(read_json(&out.join("summary.json"))["status"], "infeasible");
}

#[test]
fn malformed_scenario_exits_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{ "horizon": -5, "nodes": [] }"#).unwrap();
    let res = run(&["solve", path(&bad), "--out", path(&dir.path().join("run"))]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("horizon"), "{err}");
}

#[test]
fn policy_comparison_reports_an_uplift() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = run(&[
        "solve",
        path(&fixture("single_node.json")),
        "--knots",
        "30",
        "--compare-policies",
        "--units",
        "report",
        "--out",
        path(&out),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let uplift = read_json(&out.join("summary.json"))["policy_comparison"]["uplift"].as_f64().unwrap();
    assert!(uplift > 1.0);
    assert!(String::from_utf8_lossy(&res.stdout).contains("uplift"));
}

#[test]
fn baseline_without_data_uses_no_power() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = with_data(dir.path(), "single_node.json", 0.0);
    let res = run(&["baseline", path(&scenario), "--knots", "20", "--out", path(dir.path())]);
    assert_eq!(res.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report[0]["energy_j"], 0.0);
    let csv = std::fs::read_to_string(dir.path().join("baseline.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let p: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(p, 0.0);
    }
}

#[test]
fn oracle_and_calibration_print_their_results() {
    let res = run(&["oracle", path(&fixture("tiny_oracle.json")), "--speed-grid", "10"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8_lossy(&res.stdout);
    let ratio: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("oracle/solver"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(ratio >= 1.0 - 1e-3, "{text}");

    let res = run(&["calibrate", path(&fixture("single_node.json")), "--target-mb", "56"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    let g: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("antenna_gain_product = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((g - 1.0017282769526925).abs() < 1e-9, "{text}");
}

#[test]
fn check_passes_on_the_fixtures() {
    for name in ["single_node.json", "two_node_fixed.json"] {
        let res = run(&["check", path(&fixture(name)), "--knots", "20"]);
        assert_eq!(res.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&res.stdout));
    }
}

#[test]
fn batch_mode_solves_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = dir.path().join("scenarios");
    std::fs::create_dir(&scenarios).unwrap();
    for name in ["single_node.json", "two_node_fixed.json"] {
        std::fs::copy(fixture(name), scenarios.join(name)).unwrap();
    }
    let out = dir.path().join("run");
    let res = run(&["solve", "--all", path(&scenarios), "--knots", "40", "--out", path(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for stem in ["single_node", "two_node_fixed"] {
        assert!(out.join(stem).join("solution.csv").exists());
        assert!(out.join(stem).join("manifest.json").exists());
    }
}
