//! Binary-level behavior: exit codes, flags, file output.

use std::path::PathBuf;
use std::process::{Command, Output};

fn codednet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codednet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn analytic_case1_prints_the_base_row() {
    let out = codednet(&["analytic", "--preset", "case1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("without coding"));
    assert!(text.contains("700.0"));
    assert!(text.contains("1000.0"));
    assert!(text.contains("0.0900"));
}

#[test]
fn preset_case4_reaches_the_simulation() {
    let out = codednet(&[
        "simulate",
        "--preset",
        "case4",
        "--mode",
        "uncoded",
        "--set",
        "duration_s=0.5",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("offered_load       packets/sec         1200.0"));
}

#[test]
fn bad_range_is_a_diagnosed_error() {
    let out = codednet(&["analytic", "--preset", "case1", "--set", "p_loss=1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("p_loss"));
}

#[test]
fn unknown_key_and_unknown_format_are_errors() {
    let out = codednet(&["analytic", "--preset", "case1", "--set", "warp_factor=9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("warp_factor"));

    let out = codednet(&["analytic", "--preset", "case1", "--format", "yaml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("csv, json, table"));
}

#[test]
fn suite_exit_zero_when_all_checks_pass() {
    let out = codednet(&[
        "suite",
        "--cases",
        "1",
        "--seeds",
        "2",
        "--duration",
        "1",
        "--fault-runs",
        "4000",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("case,metric,mode,analytic,simulated,deviation,pass"));
    assert!(text.contains("# discrepancies"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn suite_exit_one_when_a_tolerance_check_fails() {
    // A single failure-sampled run cannot land within ±2pp of the
    // tolerance targets, so the gate trips deterministically.
    let out = codednet(&[
        "suite",
        "--cases",
        "1",
        "--seeds",
        "1",
        "--duration",
        "0.5",
        "--fault-runs",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn out_file_and_out_dir_are_honored() {
    let dir = std::env::temp_dir().join(format!("codednet-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_codednet"))
        .env("CODEDNET_OUT_DIR", &dir)
        .args([
            "analytic",
            "--preset",
            "case2",
            "--format",
            "csv",
            "--out",
            "case2.csv",
        ])
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    let written = std::fs::read_to_string(dir.join("case2.csv")).unwrap();
    assert!(written.starts_with("metric,unit,uncoded,coded"));
    assert!(written.contains("800.0"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn trace_export_writes_one_row_per_packet() {
    let dir = std::env::temp_dir().join(format!("codednet-trace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let trace_path: PathBuf = dir.join("trace.csv");
    let out = codednet(&[
        "simulate",
        "--preset",
        "case1",
        "--mode",
        "coded",
        "--set",
        "duration_s=0.1",
        "--set",
        "p_failure=0",
        "--trace-out",
        trace_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    // 100 generations, two coded copies each, plus the header.
    assert_eq!(trace.lines().count(), 201);
    std::fs::remove_dir_all(&dir).ok();

    // Both modes at once cannot share one trace file.
    let out = codednet(&[
        "simulate",
        "--preset",
        "case1",
        "--trace-out",
        "/tmp/unused.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_json_and_flat_give_the_same_run() {
    let dir = std::env::temp_dir().join(format!("codednet-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let flat = dir.join("s.conf");
    let json = dir.join("s.json");
    std::fs::write(
        &flat,
        "lambda = 500\np_loss = 0.2\nduration_s = 0.5\nseed = 9\n",
    )
    .unwrap();
    std::fs::write(
        &json,
        r#"{"lambda": 500, "p_loss": 0.2, "duration_s": 0.5, "seed": 9}"#,
    )
    .unwrap();
    let a = codednet(&[
        "simulate",
        "--config",
        flat.to_str().unwrap(),
        "--mode",
        "uncoded",
    ]);
    let b = codednet(&[
        "simulate",
        "--config",
        json.to_str().unwrap(),
        "--mode",
        "uncoded",
    ]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    std::fs::remove_dir_all(&dir).ok();
}
