//! Black-box tests of the `mesh-dispatch` binary: flag handling, exit
//! codes, and the files each subcommand leaves behind.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mesh_dispatch::analysis::CertificateReport;
use mesh_dispatch::commands::TRACE_HEADER;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mesh-dispatch"));
    cmd.env_remove("MESH_DISPATCH_THREADS");
    cmd
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process must exit normally")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// A small valid inline case: three identical hubs on a triangle.
fn inline_case(nodes: usize, edges: &str) -> String {
    let hub = r#"{
        "efficiencies": { "eta_ee": 0.9, "eta_ce": 0.7, "eta_ch": 0.5, "eta_gh": 0.4 },
        "r_lo": { "e": 0.0, "g": 0.0 }, "r_hi": { "e": 100.0, "g": 100.0 },
        "s_lo": { "e": 0.0, "g": 0.0 }, "s_hi": { "e": 100.0, "g": 100.0 },
        "d_lo": { "e": 0.0, "g": 0.0 }, "d_hi": { "e": 100.0, "g": 100.0 },
        "cost_e": { "c2": 0.1, "c1": 12.0 }, "cost_g": { "c2": 0.03, "c1": 5.5 },
        "util_e": { "c2": 0.1, "c1": 7.5 }, "util_g": { "c2": 0.02, "c1": 3.5 }
    }"#;
    let hubs = vec![hub; nodes].join(",");
    format!(
        r#"{{
            "case": {{
                "topology": {{ "nodes": {nodes}, "edges": {edges} }},
                "hubs": [{hubs}],
                "zeta": {{ "zeta_e": 1.1, "zeta_g": 0.6 }}
            }}
        }}"#
    )
}

#[test]
fn run_on_the_case_study_converges_and_writes_the_full_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", r#"{ "case": "ieee14" }"#);
    let out_dir = dir.path().join("results");
    let output = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("converged after"));

    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), TRACE_HEADER);
    let data_rows = lines.count();
    assert!(
        data_rows >= 300 * 14,
        "expected at least 300 rounds x 14 nodes, got {data_rows}"
    );
    assert_eq!(data_rows % 14, 0);
}

#[test]
fn run_exits_with_two_when_the_round_cap_is_hit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        &format!(
            r#"{{ "case": "ieee14",
                  "run": {{ "epsilon": 1e-9, "n_min": 1, "n_max": 4 }},
                  "output": {{ "directory": {:?} }} }}"#,
            dir.path().join("out")
        ),
    );
    let output = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(exit_code(&output), 2, "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("round cap"));
    let trace = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 4 * 14);
}

#[test]
fn run_rejects_a_malformed_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{ "case": "ieee14", "runs": {} }"#,
    );
    let output = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(exit_code(&output), 1);
    assert!(
        stderr(&output).contains("unknown field"),
        "stderr: {}",
        stderr(&output)
    );

    let output = bin()
        .args(["run", "--config", "/definitely/not/there.json"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn traces_are_reproducible_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{ "case": "ieee14", "run": { "epsilon": 1e-9, "n_min": 1, "n_max": 10 } }"#,
    );
    let run = |out: &Path, seed: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out);
        if let Some(seed) = seed {
            cmd.args(["--seed", seed]);
        }
        let output = cmd.output().unwrap();
        assert_eq!(exit_code(&output), 2, "stderr: {}", stderr(&output));
        std::fs::read(out.join("trace.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"), None);
    let b = run(&dir.path().join("b"), None);
    assert_eq!(a, b);
    let c = run(&dir.path().join("c"), Some("7"));
    assert_ne!(a, c, "the --seed flag must reach the initial draw");
}

#[test]
fn oracle_writes_the_reference_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        &inline_case(3, "[[1,2],[2,3],[1,3]]"),
    );
    let out_dir = dir.path().join("out");
    let output = bin()
        .args(["oracle", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("reference welfare"));
    let csv = std::fs::read_to_string(out_dir.join("oracle.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "node,r_e,r_g,s_e,s_g,d_e,d_g,alpha,F,mu_e,mu_g"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn oracle_rejects_a_fleet_that_cannot_balance() {
    let dir = tempfile::tempdir().unwrap();
    // One hub whose electricity purchases can never cover its own supply.
    let case = inline_case(1, "[]").replace(
        r#""r_lo": { "e": 0.0, "g": 0.0 }, "r_hi": { "e": 100.0, "g": 100.0 },
        "s_lo": { "e": 0.0, "g": 0.0 }, "s_hi": { "e": 100.0, "g": 100.0 },"#,
        r#""r_lo": { "e": 0.0, "g": 0.0 }, "r_hi": { "e": 10.0, "g": 100.0 },
        "s_lo": { "e": 50.0, "g": 0.0 }, "s_hi": { "e": 60.0, "g": 100.0 },"#,
    );
    let cfg = write_config(dir.path(), "cfg.json", &case);
    let output = bin()
        .args(["oracle", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 1);
    assert!(
        stderr(&output).contains("infeasible"),
        "stderr: {}",
        stderr(&output)
    );
}

#[test]
fn sweep_writes_summary_and_per_penalty_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{ "case": "ieee14", "run": { "epsilon": 1e-9, "n_min": 1, "n_max": 5 } }"#,
    );
    let out_dir = dir.path().join("out");
    let output = bin()
        .args(["sweep-rho", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--rho", "0.2,0.5"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    assert!(out_dir.join("trace_rho_0.2.csv").exists());
    assert!(out_dir.join("trace_rho_0.5.csv").exists());
    let summary = std::fs::read_to_string(out_dir.join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "rho,converged,iterations_to_eps,welfare_gap");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.2,false,"));
    assert!(lines[2].starts_with("0.5,false,"));
}

#[test]
fn sweep_rejects_nonpositive_penalties() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", r#"{ "case": "ieee14" }"#);
    let output = bin()
        .args(["sweep-rho", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--rho", "0.1,-3"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 1);
    assert!(
        stderr(&output).contains("positive"),
        "stderr: {}",
        stderr(&output)
    );
}

#[test]
fn certificate_holds_on_the_case_study_and_fails_on_a_disconnected_graph() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", r#"{ "case": "ieee14" }"#);
    let out_dir = dir.path().join("out");
    let output = bin()
        .args(["certificate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    let report: CertificateReport =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("certificate.json")).unwrap())
            .unwrap();
    assert!(report.verdict);

    // A disconnected inline topology is rejected while the config loads.
    let bad = write_config(dir.path(), "bad.json", &inline_case(4, "[[1,2],[3,4]]"));
    let output = bin()
        .args(["certificate", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 1);
    assert!(
        stderr(&output).contains("connect"),
        "stderr: {}",
        stderr(&output)
    );
}

#[test]
fn thread_cap_variable_is_validated_and_honored() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{ "case": "ieee14", "run": { "epsilon": 1e-9, "n_min": 1, "n_max": 2 } }"#,
    );
    let output = bin()
        .env("MESH_DISPATCH_THREADS", "1")
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 2, "stderr: {}", stderr(&output));

    for bad in ["0", "-2", "lots"] {
        let output = bin()
            .env("MESH_DISPATCH_THREADS", bad)
            .args(["run", "--config"])
            .arg(&cfg)
            .output()
            .unwrap();
        assert_eq!(exit_code(&output), 1, "value {bad:?} should be rejected");
        assert!(stderr(&output).contains("MESH_DISPATCH_THREADS"));
    }
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let output = bin().arg("--help").output().unwrap();
    assert_eq!(exit_code(&output), 0);
    assert!(stdout(&output).contains("sweep-rho"));

    let output = bin().arg("frobnicate").output().unwrap();
    assert_eq!(exit_code(&output), 1);

    let output = bin().args(["run"]).output().unwrap();
    assert_eq!(
        exit_code(&output),
        1,
        "missing --config must be a usage error"
    );
}
