//! End-to-end checks of the command-line interface and its file formats.

use std::path::Path;
use std::process::Command;

fn philo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_philo"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawning the binary");
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_solve_run_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = dir.path().join("inst.json");
    let sol_path = dir.path().join("sol.json");

    run_ok(
        philo()
            .args(["gen-instance", "--kind", "ud-hard", "--delta", "0.25", "--out"])
            .arg(&inst_path),
    );
    let inst_text = std::fs::read_to_string(&inst_path).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&inst_text).unwrap();
    assert_eq!(parsed["m"], 4);
    assert_eq!(parsed["agents"].as_array().unwrap().len(), 5);
    // 1-indexed items in files
    assert_eq!(parsed["agents"][0][0]["family"][1][0], 1);

    run_ok(
        philo()
            .args(["solve-lp", "--in"])
            .arg(&inst_path)
            .args(["--out"])
            .arg(&sol_path)
            .arg("--tighten"),
    );
    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sol_path).unwrap()).unwrap();
    assert!((sol["objective"].as_f64().unwrap() - 7.0).abs() < 1e-6);
    assert_eq!(sol["tight"], true);
    assert_eq!(sol["per_item"].as_array().unwrap().len(), 4);
    let entry = &sol["entries"][0];
    assert!(entry["t"].as_u64().unwrap() >= 1);
    assert!(entry["x"].as_f64().unwrap() > 0.0);

    let report = run_ok(
        philo()
            .args(["run", "--alg", "baseline", "--in"])
            .arg(&inst_path)
            .args(["--lp"])
            .arg(&sol_path)
            .args(["--trials", "500", "--seed", "7"]),
    );
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["algorithm"], "baseline");
    assert_eq!(report["trials"], 500);
    let ratio = report["ratio_to_lp"].as_f64().unwrap();
    assert!((0.45..=1.0).contains(&ratio), "ratio {ratio} out of range");
    // exact online optimum is attached for small instances
    assert!(report["opt_online"].as_f64().unwrap() <= 7.0 + 1e-9);

    // same master seed reproduces the report
    let again = run_ok(
        philo()
            .args(["run", "--alg", "baseline", "--in"])
            .arg(&inst_path)
            .args(["--lp"])
            .arg(&sol_path)
            .args(["--trials", "500", "--seed", "7"]),
    );
    let again: serde_json::Value = serde_json::from_str(&again).unwrap();
    assert_eq!(again["mean"], report["mean"]);
    assert_eq!(again["stderr"], report["stderr"]);
}

#[test]
fn decompose_and_trace_dump() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = dir.path().join("hard.json");
    run_ok(
        philo()
            .args(["gen-instance", "--kind", "ud-hard", "--delta", "0.02", "--out"])
            .arg(&inst_path),
    );

    let dump = run_ok(
        philo()
            .args(["decompose", "--in"])
            .arg(&inst_path)
            .args(["--eps", "0.01", "--eps-e", "0.033"]),
    );
    let dump: serde_json::Value = serde_json::from_str(&dump).unwrap();
    assert_eq!(dump["easy_check"], false);
    assert_eq!(dump["summary"]["fr_tuples"], 50);
    assert_eq!(dump["summary"]["fr_late_tuples"], 50);
    assert!((dump["summary"]["w_e"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(dump["structure"]["all_ok"], true);
    assert_eq!(dump["free_sample_audit"]["pass"], true);

    let trace_path = dir.path().join("trace.json");
    run_ok(
        philo()
            .args(["run", "--alg", "halfdouble", "--in"])
            .arg(&inst_path)
            .args(["--trials", "5", "--seed", "3", "--eps", "0.01", "--dump-trace"])
            .arg(&trace_path),
    );
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace_path).unwrap()).unwrap();
    assert_eq!(trace["steps"].as_array().unwrap().len(), 51);
    assert!(trace["reward"].as_f64().unwrap() >= 0.0);
}

#[test]
fn xos_generation_and_gap_report() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = dir.path().join("xos.json");
    run_ok(
        philo()
            .args(["gen-instance", "--kind", "xos-hard", "--delta", "0.5", "--out"])
            .arg(&inst_path),
    );
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&inst_path).unwrap()).unwrap();
    assert_eq!(parsed["m"], 8);
    assert_eq!(parsed["agents"][8].as_array().unwrap().len(), 35);
    assert_eq!(parsed["agents"][8][0]["valuation"]["kind"], "partition-max");

    let csv = run_ok(philo().args(["gap-report", "--deltas", "2", "--csv"]));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "inv_delta,delta,m,lp_value,opt_online,ratio");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    assert_eq!(row[2], "8");
    assert_eq!(row[3], "12");
    let ratio: f64 = row[5].parse().unwrap();
    assert!(ratio < 1.0);

    let json = run_ok(philo().args(["gap-report", "--deltas", "2"]));
    let rows: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(rows[0]["m"], 8);
}

#[test]
fn run_optimal_dp() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = dir.path().join("tiny.json");
    run_ok(
        philo()
            .args(["gen-instance", "--kind", "ud-hard", "--delta", "0.5", "--out"])
            .arg(&inst_path),
    );
    let out = run_ok(philo().args(["run", "--alg", "optimal-dp", "--in"]).arg(&inst_path));
    let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((parsed["opt_online"].as_f64().unwrap() - 2.75).abs() < 1e-9);
}

#[test]
fn rejects_invalid_instances() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"m": 2, "agents": [[{"p": 0.5, "valuation": {"kind": "additive", "m": 2, "weights": [1.0, 2.0]}, "family": [[]]}]]}"#,
    )
    .unwrap();
    let out = philo()
        .args(["solve-lp", "--in"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.path().join("sol.json"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sum to 1"), "unexpected error: {stderr}");
}

#[test]
fn thread_cap_env_var_is_respected() {
    // determinism under a single thread must match the default pool
    let dir = tempfile::tempdir().unwrap();
    let inst_path = dir.path().join("inst.json");
    run_ok(
        philo()
            .args(["gen-instance", "--kind", "ud-hard", "--delta", "0.25", "--out"])
            .arg(&inst_path),
    );
    let multi = run_ok(
        philo()
            .args(["run", "--alg", "combined", "--in"])
            .arg(&inst_path)
            .args(["--trials", "400", "--seed", "11"]),
    );
    let single = run_ok(
        philo()
            .env("PHILO_THREADS", "1")
            .args(["run", "--alg", "combined", "--in"])
            .arg(&inst_path)
            .args(["--trials", "400", "--seed", "11"]),
    );
    let multi: serde_json::Value = serde_json::from_str(&multi).unwrap();
    let single: serde_json::Value = serde_json::from_str(&single).unwrap();
    assert_eq!(multi["mean"], single["mean"]);
}

#[test]
fn tightened_instance_file_is_written_when_agents_append() {
    // a family that cannot cover item mass forces appended zero agents
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("slack.json");
    std::fs::write(
        &path,
        r#"{"m": 1, "agents": [[{"p": 1.0, "valuation": {"kind": "additive", "m": 1, "weights": [0.0]}, "family": [[]]}]]}"#,
    )
    .unwrap();
    let sol_path = dir.path().join("sol.json");
    // without --out-instance this must fail
    let out = philo()
        .args(["solve-lp", "--in"])
        .arg(&path)
        .args(["--out"])
        .arg(&sol_path)
        .arg("--tighten")
        .output()
        .unwrap();
    assert!(!out.status.success());

    let tight_path = dir.path().join("tight.json");
    run_ok(
        philo()
            .args(["solve-lp", "--in"])
            .arg(&path)
            .args(["--out"])
            .arg(&sol_path)
            .arg("--tighten")
            .args(["--out-instance"])
            .arg(&tight_path),
    );
    assert!(Path::new(&tight_path).exists());
    let tight: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&tight_path).unwrap()).unwrap();
    assert_eq!(tight["agents"].as_array().unwrap().len(), 2);
}
