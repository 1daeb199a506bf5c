use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nerfsynth_core::RunConfig;
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn nerfsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nerfsynth")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_minimal_paper() {
    let out = tempfile::tempdir().unwrap();
    let m = fixtures().join("minimal");
    let o = nerfsynth(&[
        "synth",
        "--paper",
        s(&m.join("paper.md")),
        "--out",
        s(out.path()),
        "--llm",
        s(&m.join("script.json")),
        "--sandbox",
        "stub",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.path().join("repo/tinyfield/config.py").is_file());
    let events = fs::read_to_string(out.path().join("events.jsonl")).unwrap();
    assert!(events.lines().last().unwrap().contains("success"));

    let i = nerfsynth(&["inspect", "--out", s(out.path())]);
    assert_eq!(i.status.code(), Some(0));
    let summary: Value = serde_json::from_slice(&i.stdout).unwrap();
    assert_eq!(summary["terminal"], "success");
    assert_eq!(summary["valid"], true);
}

#[test]
fn synth_without_model_fails_with_log() {
    let out = tempfile::tempdir().unwrap();
    let o = nerfsynth(&["synth", "--paper", s(&fixtures().join("minimal/paper.md")), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.path().join("events.jsonl").is_file());
}

#[test]
fn usage_errors_exit_2() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(nerfsynth(&["synth", "--out", s(out.path())]).status.code(), Some(2));
    assert_eq!(nerfsynth(&["synth", "--paper", "/no/such.md", "--out", s(out.path())]).status.code(), Some(2));
    let zero = nerfsynth(&[
        "synth",
        "--paper",
        s(&fixtures().join("minimal/paper.md")),
        "--out",
        s(out.path()),
        "--smoke-iters",
        "0",
    ]);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn help_defaults_match_config() {
    let o = nerfsynth(&["synth", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = String::from_utf8(o.stdout).unwrap();
    let d = RunConfig::default();
    assert!(help.contains(&format!("[default: {}]", d.smoke_iters)), "{help}");
    assert!(help.contains(&format!("[default: {}]", d.max_refine)), "{help}");
    assert_eq!((d.smoke_iters, d.max_refine), (3000, 5));
}

#[test]
fn eval_writes_matching_csv_and_json() {
    let out = tempfile::tempdir().unwrap();
    let bench = fixtures().join("coverage/nerfify/bench.json");
    let o = nerfsynth(&["eval", "--bench", s(&bench), "--out", s(out.path()), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: Value = serde_json::from_str(&fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(serde_json::from_slice::<Value>(&o.stdout).unwrap(), json);
    let csv = fs::read_to_string(out.path().join("report.csv")).unwrap();
    let rows = json["rows"].as_array().unwrap();
    let lines: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(lines.len(), rows.len() + 1);
    for (line, row) in lines.iter().zip(rows) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], row["id"].as_str().unwrap());
        let score: f64 = cells[9].parse().unwrap();
        assert!((score - row["score"].as_f64().unwrap()).abs() <= 0.005, "{line}");
    }
}

#[test]
fn malformed_manifest_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench.json");
    fs::write(&bench, r#"[{"id": "x", "paper_md": "missing.md", "psnr_target": 25.0}]"#).unwrap();
    let o = nerfsynth(&["eval", "--bench", s(&bench), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.md"));
}
