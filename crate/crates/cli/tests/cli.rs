use std::path::Path;
use std::process::{Command, Output};

fn oneshot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oneshot")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exhaustive_check_passes_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = oneshot(&[
        "check", "--object", "mwmr", "--writers", "2", "--readers", "1", "--mode", "exhaustive", "--out",
        path_arg(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("11550 runs, 11550 valid"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["schema"], 1);
    assert_eq!(json["verdicts"]["valid"], 11550);
}

#[test]
fn crash_and_collect_modes() {
    let out = oneshot(&["check", "--writers", "1", "--readers", "1", "--crash"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("125 runs"));
    let out = oneshot(&[
        "check", "--mode", "random", "--snapshot", "collect", "--trials", "500", "--seed", "9",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("500 runs, 500 valid"));
}

#[test]
fn mutant_failures_exit_one_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = oneshot(&["check", "--mutant", "reader-late-first", "--out", path_arg(&report)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("failure 0: run"));

    let out = oneshot(&["replay", "--report", path_arg(&report), "--failure", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("step=0 proc="));
    assert!(text.contains("# violation: replay:"));

    let out = oneshot(&["replay", "--report", path_arg(&report), "--failure", "999"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_of_a_clean_report_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    oneshot(&["check", "--writers", "1", "--readers", "0", "--out", path_arg(&report)]);
    let out = oneshot(&["replay", "--report", path_arg(&report)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no failures"));
}

#[test]
fn config_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
            "object": "mwmr",
            "processors": [
                {"proc": 0, "command": {"write": {"int": 7}}},
                {"proc": 1, "command": "read"}
            ],
            "mode": "exhaustive"
        }"#,
    )
    .unwrap();
    let out = oneshot(&["check", "--config", path_arg(&config)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("35 runs, 35 valid"));
}

#[test]
fn bad_configurations_exit_two() {
    assert_eq!(oneshot(&["check", "--object", "stack"]).status.code(), Some(2));
    assert_eq!(oneshot(&["check", "--writers", "4", "--readers", "4"]).status.code(), Some(2));
    assert_eq!(oneshot(&["check", "--mutant", "nonsense"]).status.code(), Some(2));
    assert_eq!(oneshot(&["check", "--config", "/nonexistent.json"]).status.code(), Some(2));
}

#[test]
fn validate_prints_a_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tuple.json");
    std::fs::write(
        &input,
        r#"{
            "completed": [
                {"proc": 1, "command": "read", "response": {"int": 5}, "late_snapshot": [1]}
            ],
            "pending": [{"proc": 0, "command": {"write": {"int": 5}}}]
        }"#,
    )
    .unwrap();
    let out = oneshot(&["validate", "--input", path_arg(&input)]);
    assert_eq!(out.status.code(), Some(0));
    let verdict: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(verdict["valid"], true);
    assert_eq!(verdict["witness"], serde_json::json!([0, 1]));
    assert_eq!(verdict["adopted"], serde_json::json!([0]));

    std::fs::write(
        &input,
        r#"{"completed": [{"proc": 0, "command": "read", "response": {"int": 5}, "late_snapshot": [0]}]}"#,
    )
    .unwrap();
    assert_eq!(oneshot(&["validate", "--input", path_arg(&input)]).status.code(), Some(1));
}
