use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn khop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_khop")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CYCLE: &str = r#"{"schema_version": 1, "name": "cycle", "graph": {"n": 4, "edges": [[1, 2], [2, 3], [3, 4]]},
    "target_graph": {"n": 4, "edges": [[1, 2], [2, 3], [3, 4], [1, 4]]},
    "k": 3, "plant": {"state_dim": 2}, "controller": {"kind": "khop_consensus"},
    "bounds": {"d_udot": 1.0, "d_tilde_u": 0.5}, "gains": {"g": 20.0},
    "sim": {"dt": 0.001, "t_end": 4.0, "seed": 3, "init_box": {"min": 0.0, "max": 0.1}}}"#;

#[test]
fn reproduce_writes_all_artifacts_and_passes() {
    let dir = TempDir::new().unwrap();
    let out = khop(&["reproduce-paper", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    for f in ["scenario.json", "gain_report.json", "telemetry.csv", "report.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["all_pass"], Value::Bool(true));
    let gains = json(&dir.path().join("gain_report.json"));
    let theta = gains["agents"][0]["theta"].as_f64().unwrap();
    assert!((theta - 3.40).abs() < 0.05);
}

#[test]
fn complete_graph_needs_no_observers() {
    let dir = TempDir::new().unwrap();
    let scenario = write(
        dir.path(),
        "k4.json",
        r#"{"schema_version": 1, "name": "k4",
            "graph": {"n": 4, "edges": [[1, 2], [1, 3], [1, 4], [2, 3], [2, 4], [3, 4]]},
            "k": 2, "plant": {"state_dim": 1}, "controller": {"kind": "khop_consensus"},
            "bounds": {"d_udot": 1.0, "d_tilde_u": 0.5}, "sim": {"dt": 0.01, "t_end": 1.0}}"#,
    );
    let out = khop(&["tune", "--scenario", s(&scenario), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert!(text(&out).contains("no observers needed"));
    let report = json(&dir.path().join("gain_report.json"));
    assert!(report["agents"].as_array().unwrap().iter().all(|a| a["theta"].is_null()));
}

#[test]
fn undersized_pi_is_reported_as_not_certified() {
    let dir = TempDir::new().unwrap();
    let body = CYCLE.replace(r#""gains": {"g": 20.0}"#, r#""gains": {"g": 20.0, "overrides": [{"agent": 1, "pi": 0.5}]}"#);
    let scenario = write(dir.path(), "lowpi.json", &body);
    let out = khop(&["tune", "--scenario", s(&scenario), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", text(&out));
    let report = json(&dir.path().join("gain_report.json"));
    let v = &report["violations"][0];
    assert_eq!(v["agent"], 1);
    assert_eq!(v["inequality"], "pi");
    assert!(v["margin"].as_f64().unwrap() < 0.0);
}

#[test]
fn same_seed_gives_identical_telemetry() {
    let dir = TempDir::new().unwrap();
    let scenario = write(dir.path(), "s.json", CYCLE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for o in [&a, &b] {
        let out = khop(&["simulate", "--scenario", s(&scenario), "--out", s(o), "--seed", "11"]);
        assert_eq!(code(&out), 0, "{}", text(&out));
    }
    let ca = fs::read(a.join("telemetry.csv")).unwrap();
    // 4 s is far shorter than the certified input times: unsettled inputs are inconclusive
    let report = json(&a.join("report.json"));
    let input = report["criteria"].as_array().unwrap().iter().find(|c| c["name"] == "input_certificate").unwrap();
    assert!(input["status"] == "PASS" || input["status"] == "NOT_APPLICABLE", "{input}");
    assert_eq!(ca, fs::read(b.join("telemetry.csv")).unwrap());
    let c = dir.path().join("c");
    khop(&["simulate", "--scenario", s(&scenario), "--out", s(&c), "--seed", "12"]);
    assert_ne!(ca, fs::read(c.join("telemetry.csv")).unwrap());
}

#[test]
fn verify_accepts_own_telemetry_and_rejects_tampered_errors() {
    let dir = TempDir::new().unwrap();
    let out = khop(&["reproduce-paper", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let scenario = dir.path().join("scenario.json");
    let csv = dir.path().join("telemetry.csv");
    let out = khop(&["verify", "--scenario", s(&scenario), "--csv", s(&csv), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", text(&out));

    let original = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = original.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "errx_1").unwrap();
    let last = lines.len() - 1;
    let mut row: Vec<String> = lines[last].split(',').map(String::from).collect();
    row[col] = "5.0".into();
    lines[last] = row.join(",");
    let tampered = write(dir.path(), "tampered.csv", &(lines.join("\n") + "\n"));
    let out = khop(&["verify", "--scenario", s(&scenario), "--csv", s(&tampered), "--out", s(dir.path())]);
    assert_eq!(code(&out), 4, "{}", text(&out));
    let report = json(&dir.path().join("verify_report.json"));
    let bound = report["criteria"].as_array().unwrap().iter().find(|c| c["name"] == "post_input_bound").unwrap();
    assert_eq!(bound["status"], "FAIL");
}

#[test]
fn bad_inputs_exit_with_usage_errors() {
    let dir = TempDir::new().unwrap();
    let out = khop(&["simulate", "--scenario", s(&dir.path().join("missing.json"))]);
    assert_eq!(code(&out), 1);
    let broken = write(dir.path(), "broken.json", "{\"schema_version\": 1, \"name\": ");
    assert_eq!(code(&khop(&["tune", "--scenario", s(&broken), "--out", s(dir.path())])), 1);
    let future = write(dir.path(), "future.json", &CYCLE.replace("\"schema_version\": 1", "\"schema_version\": 9"));
    let out = khop(&["tune", "--scenario", s(&future), "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(text(&out).contains("schema_version"));
    assert_eq!(code(&khop(&["tune"])), 1);
    assert_eq!(code(&khop(&["frobnicate"])), 1);
    assert_eq!(code(&khop(&["simulate", "--boundary-layer", "-1"])), 1);
}

#[test]
fn help_and_version_exit_cleanly() {
    let out = khop(&["--help"]);
    assert_eq!(code(&out), 0);
    for sub in ["tune", "simulate", "verify", "sweep", "reproduce-paper"] {
        assert!(text(&out).contains(sub), "help lacks {sub}");
    }
    assert_eq!(code(&khop(&["--version"])), 0);
}

#[test]
fn zero_controller_leaves_states_constant() {
    let dir = TempDir::new().unwrap();
    let body = CYCLE.replace(r#"{"kind": "khop_consensus"}"#, r#"{"kind": "zero"}"#);
    let scenario = write(dir.path(), "zero.json", &body);
    let out = khop(&["simulate", "--scenario", s(&scenario), "--out", s(dir.path())]);
    assert!(code(&out) == 0 || code(&out) == 4, "{}", text(&out));
    let csv = fs::read_to_string(dir.path().join("telemetry.csv")).unwrap();
    let mut rows = csv.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let xcols: Vec<usize> = (0..header.len()).filter(|&c| header[c].starts_with("x_")).collect();
    assert_eq!(xcols.len(), 8);
    let rows: Vec<Vec<&str>> = rows.map(|r| r.split(',').collect()).collect();
    for r in &rows {
        for &c in &xcols {
            assert_eq!(r[c], rows[0][c]);
        }
    }
}

#[test]
fn divergence_exits_3_and_keeps_partial_telemetry() {
    let dir = TempDir::new().unwrap();
    let scenario = write(
        dir.path(),
        "div.json",
        r#"{"schema_version": 1, "name": "unstable", "graph": {"n": 3, "edges": [[1, 2], [2, 3]]},
            "k": 2, "plant": {"state_dim": 1, "a": [[5.0]]}, "controller": {"kind": "zero"},
            "bounds": {"d_udot": 1.0, "d_tilde_u": 0.5},
            "sim": {"dt": 0.01, "t_end": 10.0, "divergence_limit": 100.0, "init_box": {"min": 0.5, "max": 1.0}}}"#,
    );
    let out = khop(&["simulate", "--scenario", s(&scenario), "--out", s(dir.path())]);
    assert_eq!(code(&out), 3, "{}", text(&out));
    assert!(text(&out).contains("diverged"));
    let csv = fs::read_to_string(dir.path().join("telemetry.csv")).unwrap();
    assert!(csv.lines().count() > 2);
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn sweep_runs_every_cell() {
    let dir = TempDir::new().unwrap();
    let scenario = write(dir.path(), "s.json", CYCLE);
    let out = khop(&[
        "sweep", "--scenario", s(&scenario), "--out", s(dir.path()),
        "--theta-scale", "1,2", "--pi-scale", "1", "--k", "2,3",
    ]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    // k = 2 cannot reach the 1-4 target edge
    assert!(rows[0].contains("outside its 2-hop set"));
    assert!(rows[1].contains("true"));
}
