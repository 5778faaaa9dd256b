//! Exit-code and output-layout contract of the `paramedic` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paramedic"))
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn plan_json() -> &'static str {
    r#"{"waypoints":[[0.0,0.0,15.0],[80.0,0.0,15.0],[80.0,80.0,15.0],[0.0,80.0,15.0]],"cruise_speed":8.0}"#
}

/// Three-case suite: benign, one single-fault deviation, one terminal crash.
fn tiny_suite() -> String {
    let mut s = String::new();
    s.push_str(r#"{"plans":{"square":{"waypoints":[[0.0,0.0,15.0],[80.0,0.0,15.0],[80.0,80.0,15.0],[0.0,80.0,15.0]],"cruise_speed":8.0}}}"#);
    s.push('\n');
    s.push_str(r#"{"case_id":"benign","overrides":{},"plan_id":"square"}"#);
    s.push('\n');
    s.push_str(r#"{"case_id":"deviation","overrides":{"ATC_RAT_RLL_P":0.3225},"plan_id":"square"}"#);
    s.push('\n');
    s.push_str(r#"{"case_id":"crash","overrides":{"PSC_POSZ_P":2.95},"plan_id":"square"}"#);
    s.push('\n');
    s
}

#[test]
fn params_lists_the_registry() {
    let output = bin().arg("params").output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("ATC_RAT_RLL_P"));
    assert!(text.contains("DESCRIPTION"));
}

#[test]
fn params_with_empty_registry_prints_header_only() {
    let tmp = TempDir::new().unwrap();
    let registry = write(tmp.path(), "empty.json", "[]");
    let output = bin().arg("params").arg("--registry").arg(&registry).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(stdout(&output).lines().count(), 1, "header only");
}

#[test]
fn params_with_broken_registry_exits_2() {
    let tmp = TempDir::new().unwrap();
    let registry = write(tmp.path(), "broken.json", r#"[{"name":"X","min":4.5,"max":0.5,"step":0.1,"default":1.0}]"#);
    let output = bin().arg("params").arg("--registry").arg(&registry).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("min"), "{}", stderr(&output));
}

#[test]
fn run_benign_exits_0_with_zero_repairs() {
    let tmp = TempDir::new().unwrap();
    let params = write(tmp.path(), "params.json", "{}");
    let plan = write(tmp.path(), "plan.json", plan_json());
    let out_dir = tmp.path().join("runs");
    let output = bin()
        .args(["run", "--params"])
        .arg(&params)
        .arg("--plan")
        .arg(&plan)
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).contains("result=passed repair_count=0"));

    // One run directory with the full output set.
    let run_dirs: Vec<_> = std::fs::read_dir(&out_dir).unwrap().collect();
    assert_eq!(run_dirs.len(), 1);
    let dir = run_dirs[0].as_ref().unwrap().path();
    for file in ["record.json", "trace.jsonl", "advisor_audit.jsonl", "manifest.json"] {
        assert!(dir.join(file).exists(), "{file} missing");
    }
}

#[test]
fn run_deviation_with_optimal_oracle_repairs_and_exits_0() {
    let tmp = TempDir::new().unwrap();
    let params = write(tmp.path(), "params.json", r#"{"ATC_RAT_RLL_P":0.3225}"#);
    let plan = write(tmp.path(), "plan.json", plan_json());
    let out_dir = tmp.path().join("runs");
    let output = bin()
        .args(["run", "--params"])
        .arg(&params)
        .arg("--plan")
        .arg(&plan)
        .arg("--output-dir")
        .arg(&out_dir)
        .args(["--advisor", "mock-optimal"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).contains("repair_count=1"), "{}", stdout(&output));
    assert!(stdout(&output).contains("anomalies=Deviation"));

    // The audit log carries the exchange: prompt, raw completion, advice.
    let run_dir = std::fs::read_dir(&out_dir).unwrap().next().unwrap().unwrap().path();
    let audit = std::fs::read_to_string(run_dir.join("advisor_audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 1);
    let entry: serde_json::Value = serde_json::from_str(audit.lines().next().unwrap()).unwrap();
    assert_eq!(entry["anomaly"], "Deviation");
    assert!(entry["prompt"].as_str().unwrap().contains("ATC_RAT_RLL_P"));
    assert!(entry["raw_response"].as_str().unwrap().contains("parameters"));
    assert!(entry["advice"]["updates"]["ATC_RAT_RLL_P"].is_number());
    assert!(entry["error"].is_null());
}

#[test]
fn run_deviation_with_noop_oracle_exits_1() {
    let tmp = TempDir::new().unwrap();
    let params = write(tmp.path(), "params.json", r#"{"ATC_RAT_RLL_P":0.3225}"#);
    let plan = write(tmp.path(), "plan.json", plan_json());
    let output = bin()
        .args(["run", "--params"])
        .arg(&params)
        .arg("--plan")
        .arg(&plan)
        .arg("--output-dir")
        .arg(tmp.path().join("runs"))
        .args(["--advisor", "mock-noop"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "{}", stderr(&output));
    assert!(stdout(&output).contains("result=failed(repair-limit) repair_count=5"));
}

#[test]
fn run_with_missing_params_file_exits_2() {
    let tmp = TempDir::new().unwrap();
    let plan = write(tmp.path(), "plan.json", plan_json());
    let output = bin()
        .args(["run", "--params", "/nonexistent/params.json", "--plan"])
        .arg(&plan)
        .arg("--output-dir")
        .arg(tmp.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn reruns_never_overwrite_prior_runs() {
    let tmp = TempDir::new().unwrap();
    let params = write(tmp.path(), "params.json", "{}");
    let plan = write(tmp.path(), "plan.json", plan_json());
    let out_dir = tmp.path().join("runs");
    for _ in 0..2 {
        let output = bin()
            .args(["run", "--params"])
            .arg(&params)
            .arg("--plan")
            .arg(&plan)
            .arg("--output-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    }
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 2, "two distinct run dirs");
}

#[test]
fn bench_tiny_suite_with_optimal_oracle() {
    let tmp = TempDir::new().unwrap();
    let suite = write(tmp.path(), "suite.jsonl", &tiny_suite());
    let out_dir = tmp.path().join("runs");
    let output = bin()
        .args(["bench", "--suite"])
        .arg(&suite)
        .arg("--output-dir")
        .arg(&out_dir)
        .args(["--advisor", "mock-optimal", "--parallelism", "2"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("ttc=3"), "{text}");
    assert!(text.contains("rsr_over_triggered=100%"), "{text}");

    let run_dir = std::fs::read_dir(&out_dir).unwrap().next().unwrap().unwrap().path();
    let csv = std::fs::read_to_string(run_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("case_id,result,repair_count,anomalies\n"));
    assert!(csv.contains("crash,failed(crash),0,"), "{csv}");
    assert!(run_dir.join("report.json").exists());
}

#[test]
fn bench_exit_0_even_when_everything_fails() {
    let tmp = TempDir::new().unwrap();
    let suite = write(tmp.path(), "suite.jsonl", &tiny_suite());
    let output = bin()
        .args(["bench", "--suite"])
        .arg(&suite)
        .arg("--output-dir")
        .arg(tmp.path().join("runs"))
        .args(["--advisor", "mock-noop"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "results are data: {}", stderr(&output));
    assert!(stdout(&output).contains("rsr=0%"), "{}", stdout(&output));
}

#[test]
fn bench_with_missing_suite_exits_2() {
    let tmp = TempDir::new().unwrap();
    let output = bin()
        .args(["bench", "--suite", "/nonexistent/suite.jsonl"])
        .arg("--output-dir")
        .arg(tmp.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn bench_with_unknown_plan_reference_exits_2() {
    let tmp = TempDir::new().unwrap();
    let mut text = tiny_suite();
    text.push_str(r#"{"case_id":"lost","overrides":{},"plan_id":"nonexistent"}"#);
    text.push('\n');
    let suite = write(tmp.path(), "suite.jsonl", &text);
    let output = bin()
        .args(["bench", "--suite"])
        .arg(&suite)
        .arg("--output-dir")
        .arg(tmp.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("nonexistent"), "{}", stderr(&output));
}

#[test]
fn replay_prints_the_crash_from_a_recorded_trace() {
    let tmp = TempDir::new().unwrap();
    let params = write(tmp.path(), "params.json", r#"{"PSC_POSZ_P":2.95}"#);
    let plan = write(tmp.path(), "plan.json", plan_json());
    let out_dir = tmp.path().join("runs");
    let output = bin()
        .args(["run", "--params"])
        .arg(&params)
        .arg("--plan")
        .arg(&plan)
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "crash mission fails: {}", stderr(&output));

    let run_dir = std::fs::read_dir(&out_dir).unwrap().next().unwrap().unwrap().path();
    let trace = run_dir.join("trace.jsonl");
    let output = bin()
        .args(["replay", "--trace"])
        .arg(&trace)
        .arg("--plan")
        .arg(&plan)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).contains("Crash"), "{}", stdout(&output));
}

#[test]
fn replay_of_a_benign_trace_is_an_empty_timeline() {
    let tmp = TempDir::new().unwrap();
    let params = write(tmp.path(), "params.json", "{}");
    let plan = write(tmp.path(), "plan.json", plan_json());
    let out_dir = tmp.path().join("runs");
    bin()
        .args(["run", "--params"])
        .arg(&params)
        .arg("--plan")
        .arg(&plan)
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    let run_dir = std::fs::read_dir(&out_dir).unwrap().next().unwrap().unwrap().path();
    let output = bin()
        .args(["replay", "--trace"])
        .arg(run_dir.join("trace.jsonl"))
        .arg("--plan")
        .arg(&plan)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout(&output).is_empty(), "{}", stdout(&output));
}

#[test]
fn replay_with_a_truncated_line_exits_2_naming_the_line() {
    let tmp = TempDir::new().unwrap();
    let plan = write(tmp.path(), "plan.json", plan_json());
    let trace = write(
        tmp.path(),
        "trace.jsonl",
        "{\"type\":\"sample\",\"t\":0.0,\"pos\":[0.0,0.0,0.0],\"vel\":[0.0,0.0,0.0],\"alt\":0.0}\n{\"type\":\"sam\n",
    );
    let output = bin()
        .args(["replay", "--trace"])
        .arg(&trace)
        .arg("--plan")
        .arg(&plan)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("line 2"), "{}", stderr(&output));
}

#[test]
fn run_over_a_subprocess_wire_link_passes() {
    let tmp = TempDir::new().unwrap();
    let config = write(tmp.path(), "config.toml", "wire_time_scale = 200.0\n");
    let params = write(tmp.path(), "params.json", "{}");
    let plan = write(tmp.path(), "plan.json", plan_json());
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--params")
        .arg(&params)
        .arg("--plan")
        .arg(&plan)
        .arg("--output-dir")
        .arg(tmp.path().join("runs"))
        .args(["--link", "subprocess"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).contains("result=passed"), "{}", stdout(&output));
}

#[test]
fn flags_override_config_file_values() {
    // Config selects the noop oracle, the flag forces optimal: the flag wins
    // and the deviation mission is repaired instead of exhausting the limit.
    let tmp = TempDir::new().unwrap();
    let config = write(
        tmp.path(),
        "config.toml",
        "[advisor]\nbackend = \"mock\"\nmock_mode = \"noop\"\n",
    );
    let params = write(tmp.path(), "params.json", r#"{"ATC_RAT_RLL_P":0.3225}"#);
    let plan = write(tmp.path(), "plan.json", plan_json());
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--params")
        .arg(&params)
        .arg("--plan")
        .arg(&plan)
        .arg("--output-dir")
        .arg(tmp.path().join("runs"))
        .args(["--advisor", "mock-optimal"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).contains("repair_count=1"), "{}", stdout(&output));
}

#[test]
fn gen_suite_writes_a_loadable_200_case_file() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("suite.jsonl");
    let output = bin().args(["gen-suite", "--out"]).arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 201, "header plus 200 cases");
    // It matches the checked-in copy.
    let shipped = std::fs::read_to_string(workspace_file("crates/paramedic/data/suite_standard.jsonl")).unwrap();
    assert_eq!(text, shipped);
}
