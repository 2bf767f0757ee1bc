//! CLI contract tests: exit codes, output files, determinism.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_trimarket")
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

#[test]
fn run_micro1_succeeds() {
    let out = Command::new(bin())
        .args(["run", fixture("micro1.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("verified true"), "stdout: {stdout}");
}

#[test]
fn missing_case_file_exits_one() {
    let out = Command::new(bin())
        .args(["run", "/nonexistent/case.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read case file"));
}

#[test]
fn usage_error_exits_one() {
    let out = Command::new(bin()).args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_single_run_exits_two() {
    // Cap-and-trade with a zero cap and a must-run emitter.
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(fixture("micro1.json")).unwrap(),
    )
    .unwrap();
    doc["carbon"]["cap"] = serde_json::json!(0.0);
    doc["power"]["generators"][1]["p_min"] = serde_json::json!(1.0);
    let path = dir.path().join("infeasible.json");
    std::fs::write(&path, doc.to_string()).unwrap();

    let out = Command::new(bin())
        .args(["run", path.to_str().unwrap(), "--mode", "cap-and-trade"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_outputs_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let out = Command::new(bin())
        .args([
            "run",
            fixture("micro1.json").to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--format",
            "json",
            "--dump",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in ["run.json", "solution.json", "verification.json", "system.kkt.txt", "model.mps", "model.names.tsv", "model.lp"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    let verification: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("verification.json")).unwrap())
            .unwrap();
    assert_eq!(verification["pass"], serde_json::json!(true));
}

#[test]
fn clearing_time_rejects_non_divisor_scalar() {
    let out = Command::new(bin())
        .args([
            "clearing-time",
            fixture("case14g8.json").to_str().unwrap(),
            "--scalars",
            "5",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not divide"));
}

#[test]
fn environment_variables_select_the_adapter() {
    // TRIMARKET_SOLVER overrides the case file; a bogus external binary
    // must surface as an adapter error.
    let out = Command::new(bin())
        .args(["run", fixture("micro1.json").to_str().unwrap()])
        .env("TRIMARKET_SOLVER", "external")
        .env("TRIMARKET_SOLVER_BIN", "/nonexistent/solver")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("external"), "stderr: {stderr}");
}

#[test]
fn sweep_demand_emits_deterministic_csv_on_micro1() {
    // Byte-deterministic up to the wall-clock column.
    let run = || {
        let out = Command::new(bin())
            .args([
                "sweep-demand",
                fixture("micro1.json").to_str().unwrap(),
                "--growth",
                "0,10",
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        let solve_ms_col = text
            .lines()
            .next()
            .unwrap()
            .split(',')
            .position(|h| h == "solve_ms")
            .unwrap();
        text.lines()
            .map(|line| {
                let mut fields: Vec<&str> = line.split(',').collect();
                if fields.len() > solve_ms_col && fields[solve_ms_col] != "solve_ms" {
                    fields[solve_ms_col] = "-";
                }
                fields.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert!(a.lines().count() >= 3);
    assert!(a.starts_with("label,"));
}
