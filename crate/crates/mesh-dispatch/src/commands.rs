//! The four executable commands behind the CLI: the decentralized run
//! with its per-round trace, the centralized reference solve, a penalty
//! sweep, and the graph contraction certificate.
//!
//! Every command reads one JSON configuration, writes its artifacts under
//! the configured output directory, and reports through exit codes:
//! 0 for success (a converged run, a solved reference, a holding
//! certificate), 1 for any error, and 2 for an honest incomplete — a run
//! that hit the round cap without meeting the threshold, or a certificate
//! whose matrices could not be formed. CSV cells print floats through the
//! standard shortest round-trip formatting, so identical inputs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::admm::{self, IterationRecord, NodeState, RunTrace};
use crate::analysis::{self, CertificateReport};
use crate::config::{self, LoadedConfig};
use crate::error::Error;
use crate::network::metropolis_weights;
use crate::oracle::{self, CentralSolution};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INCOMPLETE: i32 = 2;

/// Penalty values swept when the command line gives none.
pub const DEFAULT_SWEEP: [f64; 4] = [0.01, 0.1, 1.0, 5.0];

/// Dual-stationarity tolerance of the centralized reference solve.
const ORACLE_TOL: f64 = 1e-6;

/// Column header of the per-round trace.
pub const TRACE_HEADER: &str =
    "k,node,dr,ds,dd,dalpha,mismatch_e,mismatch_g,mu_spread,e_spread,lemma1_residual,F";

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub rho_list: Option<Vec<f64>>,
}

fn load_with_overrides(config_path: &Path, ov: &Overrides) -> Result<LoadedConfig, Error> {
    let mut cfg = config::load(config_path)?;
    if let Some(dir) = &ov.out {
        cfg.output.directory = dir.clone();
    }
    if let Some(seed) = ov.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn ensure_out_dir(cfg: &LoadedConfig) -> Result<(), Error> {
    std::fs::create_dir_all(&cfg.output.directory)?;
    Ok(())
}

fn fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    EXIT_FAILURE
}

fn trace_csv(records: &[IterationRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 1536 + 128);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for rec in records {
        for node in 0..rec.delta_r.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                rec.k,
                node + 1,
                rec.delta_r[node],
                rec.delta_s[node],
                rec.delta_d[node],
                rec.delta_alpha[node],
                rec.mismatch.e,
                rec.mismatch.g,
                rec.mu_spread,
                rec.e_spread,
                rec.lemma1_residual,
                rec.welfare,
            );
        }
    }
    out
}

fn final_states_csv(states: &[NodeState]) -> String {
    let mut out = String::from("node,r_e,r_g,s_e,s_g,d_e,d_g,alpha,mu_e,mu_g,e_e,e_g\n");
    for (i, st) in states.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            st.r.e,
            st.r.g,
            st.s.e,
            st.s.g,
            st.d.e,
            st.d.g,
            st.alpha,
            st.mu.e,
            st.mu.g,
            st.e.e,
            st.e.g,
        );
    }
    out
}

fn oracle_csv(sol: &CentralSolution) -> String {
    let mut out = String::from("node,r_e,r_g,s_e,s_g,d_e,d_g,alpha,F,mu_e,mu_g\n");
    for (i, (r, (s, d, alpha))) in sol
        .r_star
        .iter()
        .zip(sol.physical_allocations())
        .enumerate()
    {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            r.e,
            r.g,
            s.e,
            s.g,
            d.e,
            d.g,
            alpha,
            sol.f_star,
            sol.mu_star.e,
            sol.mu_star.g,
        );
    }
    out
}

/// Executes the decentralized run and writes `trace.csv` (and
/// `final_states.csv` when per-node output is enabled) under the output
/// directory.
pub fn execute_run(cfg: &LoadedConfig) -> Result<RunTrace, Error> {
    ensure_out_dir(cfg)?;
    let (trace, states) = admm::run(&cfg.case.hubs, &cfg.case.topology, &cfg.run)?;
    std::fs::write(
        cfg.output.directory.join("trace.csv"),
        trace_csv(&trace.records),
    )?;
    if cfg.output.emit_per_node {
        std::fs::write(
            cfg.output.directory.join("final_states.csv"),
            final_states_csv(&states),
        )?;
    }
    Ok(trace)
}

pub fn cmd_run(config_path: &Path, ov: &Overrides) -> i32 {
    let cfg = match load_with_overrides(config_path, ov) {
        Ok(cfg) => cfg,
        Err(err) => return fail(&err),
    };
    match execute_run(&cfg) {
        Ok(trace) => {
            let path = cfg.output.directory.join("trace.csv");
            if trace.converged {
                println!(
                    "converged after {} rounds; trace written to {}",
                    trace.iterations,
                    path.display()
                );
                EXIT_SUCCESS
            } else {
                println!(
                    "round cap reached after {} rounds without meeting the threshold; \
                     trace written to {}",
                    trace.iterations,
                    path.display()
                );
                EXIT_INCOMPLETE
            }
        }
        Err(err) => fail(&err),
    }
}

/// Solves the centralized reference problem and writes `oracle.csv`.
pub fn execute_oracle(cfg: &LoadedConfig) -> Result<CentralSolution, Error> {
    ensure_out_dir(cfg)?;
    let sol = oracle::solve_centralized(&cfg.case.hubs, ORACLE_TOL)?;
    std::fs::write(cfg.output.directory.join("oracle.csv"), oracle_csv(&sol))?;
    Ok(sol)
}

pub fn cmd_oracle(config_path: &Path, ov: &Overrides) -> i32 {
    let cfg = match load_with_overrides(config_path, ov) {
        Ok(cfg) => cfg,
        Err(err) => return fail(&err),
    };
    match execute_oracle(&cfg) {
        Ok(sol) => {
            println!(
                "reference welfare {} at price ({}, {}); allocation written to {}",
                sol.f_star,
                sol.mu_star.e,
                sol.mu_star.g,
                cfg.output.directory.join("oracle.csv").display()
            );
            EXIT_SUCCESS
        }
        Err(err) => fail(&err),
    }
}

/// One line of the sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rho: f64,
    pub converged: bool,
    pub iterations_to_eps: Option<usize>,
    /// Relative welfare gap against the centralized reference at the final
    /// round; absent when the reference or the run itself was unavailable.
    pub welfare_gap: Option<f64>,
    /// False when the run failed outright and produced no trace.
    pub completed: bool,
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("rho,converged,iterations_to_eps,welfare_gap\n");
    for row in rows {
        let its = row
            .iterations_to_eps
            .map(|k| k.to_string())
            .unwrap_or_default();
        let gap = row.welfare_gap.map(|g| g.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", row.rho, row.converged, its, gap);
    }
    out
}

/// Runs the decentralized iteration once per penalty value, writing
/// `trace_rho_<value>.csv` for each and `sweep_summary.csv` at the end.
/// Individual failures are reported and recorded but do not stop the
/// sweep.
pub fn execute_sweep(cfg: &LoadedConfig, rhos: &[f64]) -> Result<Vec<SweepRow>, Error> {
    if rhos.is_empty() {
        return Err(Error::config("the penalty sweep needs at least one value"));
    }
    for &rho in rhos {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::config(format!(
                "sweep penalties must be positive and finite, got {rho}"
            )));
        }
    }
    ensure_out_dir(cfg)?;

    let f_star = match oracle::solve_centralized(&cfg.case.hubs, ORACLE_TOL) {
        Ok(sol) => Some(sol.f_star),
        Err(err) => {
            eprintln!("reference solve unavailable, welfare gaps omitted: {err}");
            None
        }
    };

    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let mut run_cfg = cfg.run;
        run_cfg.rho = rho;
        match admm::run(&cfg.case.hubs, &cfg.case.topology, &run_cfg) {
            Ok((trace, _)) => {
                std::fs::write(
                    cfg.output.directory.join(format!("trace_rho_{rho}.csv")),
                    trace_csv(&trace.records),
                )?;
                let gap = match (f_star, trace.records.last()) {
                    (Some(fs), Some(last)) => Some(analysis::welfare_gap(last.welfare, fs)),
                    _ => None,
                };
                rows.push(SweepRow {
                    rho,
                    converged: trace.converged,
                    iterations_to_eps: trace.first_eps_iteration,
                    welfare_gap: gap,
                    completed: true,
                });
            }
            Err(err) => {
                eprintln!("rho {rho}: {err}");
                rows.push(SweepRow {
                    rho,
                    converged: false,
                    iterations_to_eps: None,
                    welfare_gap: None,
                    completed: false,
                });
            }
        }
    }
    std::fs::write(
        cfg.output.directory.join("sweep_summary.csv"),
        sweep_csv(&rows),
    )?;
    Ok(rows)
}

pub fn cmd_sweep_rho(config_path: &Path, ov: &Overrides) -> i32 {
    let cfg = match load_with_overrides(config_path, ov) {
        Ok(cfg) => cfg,
        Err(err) => return fail(&err),
    };
    let rhos = ov
        .rho_list
        .clone()
        .unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
    match execute_sweep(&cfg, &rhos) {
        Ok(rows) => {
            for row in &rows {
                let status = if !row.completed {
                    "failed".to_string()
                } else if row.converged {
                    match row.iterations_to_eps {
                        Some(k) => format!("converged, threshold first met at round {k}"),
                        None => "converged".to_string(),
                    }
                } else {
                    "round cap reached".to_string()
                };
                println!("rho {}: {status}", row.rho);
            }
            println!(
                "summary written to {}",
                cfg.output.directory.join("sweep_summary.csv").display()
            );
            if rows.iter().any(|row| row.completed) {
                EXIT_SUCCESS
            } else {
                EXIT_FAILURE
            }
        }
        Err(err) => fail(&err),
    }
}

/// Evaluates the graph contraction certificate and writes
/// `certificate.json`.
pub fn execute_certificate(cfg: &LoadedConfig) -> Result<CertificateReport, Error> {
    ensure_out_dir(cfg)?;
    let w = metropolis_weights(&cfg.case.topology)?;
    let report = analysis::lyapunov_certificate(&w, analysis::DEFINITENESS_THRESHOLD)?;
    let mut json = serde_json::to_string_pretty(&report)
        .map_err(|err| Error::Numerical(format!("cannot serialize the report: {err}")))?;
    json.push('\n');
    std::fs::write(cfg.output.directory.join("certificate.json"), json)?;
    Ok(report)
}

pub fn cmd_certificate(config_path: &Path, ov: &Overrides) -> i32 {
    let cfg = match load_with_overrides(config_path, ov) {
        Ok(cfg) => cfg,
        Err(err) => return fail(&err),
    };
    match execute_certificate(&cfg) {
        Ok(report) => {
            println!(
                "contraction certificate {} (disagreement radius {}); report written to {}",
                if report.verdict { "holds" } else { "fails" },
                report.gamma_w1,
                cfg.output.directory.join("certificate.json").display()
            );
            if report.verdict {
                EXIT_SUCCESS
            } else {
                EXIT_FAILURE
            }
        }
        Err(Error::Numerical(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INCOMPLETE
        }
        Err(err) => fail(&err),
    }
}
