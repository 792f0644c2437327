//! Commands behind the `gridsim` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gridsim_core::network::Network;
use gridsim_core::opf::{kkt_residual, opf_report, opf_solve, IpmOptions, OpfStatus};
use gridsim_core::parsers::{case_to_network, matpower_parse};
use gridsim_core::powerflow::{pf_report, solve_network, PfOptions};
use gridsim_sim::config::load_simulation;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

impl CliError {
    fn input(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    /// File reading and parsing; not part of the solve time.
    pub parse_s: f64,
    pub build_s: f64,
    /// Model building plus iterations.
    pub solve_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub case: String,
    pub status: String,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    pub timings: Timings,
    pub outputs: Vec<String>,
    pub details: Value,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.status.as_str() {
            "converged" | "optimal" | "completed" => EXIT_OK,
            _ => EXIT_NOT_CONVERGED,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}: {} after {} iterations", self.case, self.status, self.iterations);
        if let Some(r) = self.details.get("power_mismatch_pu").and_then(Value::as_f64) {
            s += &format!(", mismatch {r:.3e} pu");
        }
        if let Some(obj) = self.objective {
            s += &format!(", objective {obj:.6}");
        }
        s + &format!(" (solve {:.3} ms)", self.timings.solve_s * 1e3)
    }
}

fn case_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Reads and parses a Matpower file, returning the network and the time
/// spent.
pub fn read_case(path: &Path) -> Result<(Network, f64), CliError> {
    let start = Instant::now();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.into(), msg: e.to_string() })?;
    let case = matpower_parse(&text).map_err(|e| CliError::input(path, e))?;
    let net = case_to_network(&case).map_err(|e| CliError::input(path, e))?;
    Ok((net, start.elapsed().as_secs_f64()))
}

pub fn run_pf(path: &Path, opts: &PfOptions) -> Result<RunReport, CliError> {
    let (mut net, parse_s) = read_case(path)?;
    let (model, sol) = solve_network(&mut net, opts).map_err(|e| CliError::input(path, e))?;
    Ok(RunReport {
        case: case_name(path),
        status: if sol.converged { "converged" } else { "not_converged" }.into(),
        iterations: sol.iterations,
        objective: None,
        timings: Timings { parse_s, build_s: sol.timing.build_s, solve_s: sol.timing.build_s + sol.timing.solve_s },
        outputs: Vec::new(),
        details: pf_report(&net, &model, &sol),
    })
}

pub fn run_opf(path: &Path, opts: &IpmOptions) -> Result<RunReport, CliError> {
    let (net, parse_s) = read_case(path)?;
    let (problem, sol) = opf_solve(&net, Vec::new(), opts).map_err(|e| CliError::input(path, e))?;
    let mut details = opf_report(&problem, &sol);
    if let Ok(k) = kkt_residual(&problem, &sol) {
        details["kkt_unscaled"] = serde_json::to_value(k).expect("norms serialize");
    }
    Ok(RunReport {
        case: case_name(path),
        status: status_name(sol.status).into(),
        iterations: sol.iterations,
        objective: Some(sol.objective),
        timings: Timings { parse_s, build_s: sol.timing.build_s, solve_s: sol.timing.build_s + sol.timing.solve_s },
        outputs: Vec::new(),
        details,
    })
}

pub fn status_name(s: OpfStatus) -> &'static str {
    match s {
        OpfStatus::Optimal => "optimal",
        OpfStatus::MaxIter => "max_iter",
        OpfStatus::InfeasibleDetected => "infeasible",
    }
}

/// Per-time minimum and maximum of a `time,node,Vmag_pu` channel.
pub fn voltage_envelope(rows: &[Vec<String>]) -> String {
    let mut out = String::from("time,Vmin_pu,Vmax_pu\n");
    let mut current: Option<(String, f64, f64)> = None;
    let flush = |c: &Option<(String, f64, f64)>, out: &mut String| {
        if let Some((t, lo, hi)) = c {
            out.push_str(&format!("{t},{lo},{hi}\n"));
        }
    };
    for row in rows {
        let Some(v) = row.get(2).and_then(|v| v.parse::<f64>().ok()) else { continue };
        match &mut current {
            Some((t, lo, hi)) if *t == row[0] => {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
            _ => {
                flush(&current, &mut out);
                current = Some((row[0].clone(), v, v));
            }
        }
    }
    flush(&current, &mut out);
    out
}

/// Runs a configuration file and writes the output channels into `out`.
/// Network channels also get a `<id>_envelope.csv`.
pub fn run_sim(path: &Path, out: &Path) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut sim = load_simulation(path).map_err(|e| CliError::input(path, e))?;
    let parse_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let steps = sim.run().map_err(|e| CliError::input(path, e))?;
    let solve_s = start.elapsed().as_secs_f64();
    let mut outputs: Vec<String> = sim
        .write_outputs(out)
        .map_err(|e| CliError::Io { path: out.into(), msg: e.to_string() })?
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    for (id, ch) in sim.channels() {
        if ch.header == ["time", "node", "Vmag_pu"] {
            let p = out.join(format!("{id}_envelope.csv"));
            std::fs::write(&p, voltage_envelope(&ch.rows)).map_err(|e| CliError::Io { path: p.clone(), msg: e.to_string() })?;
            outputs.push(p.display().to_string());
        }
    }
    Ok(RunReport {
        case: case_name(path),
        status: "completed".into(),
        iterations: steps,
        objective: None,
        timings: Timings { parse_s, build_s: 0.0, solve_s },
        outputs,
        details: Value::Null,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub case: String,
    pub n_bus: usize,
    pub pf_ms: f64,
    pub opf_ms: f64,
    pub pf_iters: usize,
    pub opf_iters: usize,
    pub status: String,
}

pub const BENCH_HEADER: &str = "case\tn_bus\tpf_ms\topf_ms\tpf_iters\topf_iters\tstatus";

impl BenchRow {
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.3}\t{:.3}\t{}\t{}\t{}",
            self.case, self.n_bus, self.pf_ms, self.opf_ms, self.pf_iters, self.opf_iters, self.status
        )
    }

    fn failed(case: String, n_bus: usize, msg: &str) -> Self {
        log_failure(&case, msg);
        BenchRow { case, n_bus, pf_ms: f64::NAN, opf_ms: f64::NAN, pf_iters: 0, opf_iters: 0, status: "failed".into() }
    }
}

fn log_failure(case: &str, msg: &str) {
    eprintln!("{case}: {msg}");
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => xs[n / 2],
        _ => 0.5 * (xs[n / 2 - 1] + xs[n / 2]),
    }
}

/// Median wall-clock times of `repeat` PF and OPF solves of one case.
/// Parsing is excluded; model building is included.
pub fn bench_case(path: &Path, repeat: usize, pf: &PfOptions, ipm: &IpmOptions) -> BenchRow {
    let case = case_name(path);
    let net = match read_case(path) {
        Ok((net, _)) => net,
        Err(e) => return BenchRow::failed(case, 0, &e.to_string()),
    };
    let n_bus = net.buses.len();
    let (mut pf_t, mut opf_t) = (Vec::new(), Vec::new());
    let (mut pf_iters, mut opf_iters) = (0, 0);
    let mut status = "ok";
    for _ in 0..repeat.max(1) {
        let mut work = net.clone();
        let start = Instant::now();
        match solve_network(&mut work, pf) {
            Ok((_, sol)) => {
                pf_t.push(start.elapsed().as_secs_f64() * 1e3);
                pf_iters = sol.iterations;
                if !sol.converged {
                    status = "pf_not_converged";
                }
            }
            Err(e) => return BenchRow::failed(case, n_bus, &e.to_string()),
        }
        let start = Instant::now();
        match opf_solve(&net, Vec::new(), ipm) {
            Ok((_, sol)) => {
                opf_t.push(start.elapsed().as_secs_f64() * 1e3);
                opf_iters = sol.iterations;
                if sol.status != OpfStatus::Optimal && status == "ok" {
                    status = status_name(sol.status);
                }
            }
            Err(e) => return BenchRow::failed(case, n_bus, &e.to_string()),
        }
    }
    BenchRow { case, n_bus, pf_ms: median(&mut pf_t), opf_ms: median(&mut opf_t), pf_iters, opf_iters, status: status.into() }
}

/// Expands glob patterns; plain paths pass through unchanged.
pub fn expand_cases(patterns: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in patterns {
        if p.contains(['*', '?', '[']) {
            let paths = glob::glob(p).map_err(|e| CliError::Input(format!("{p}: {e}")))?;
            let mut found: Vec<PathBuf> = paths.filter_map(Result::ok).collect();
            found.sort();
            if found.is_empty() {
                return Err(CliError::Input(format!("{p}: no matching files")));
            }
            out.extend(found);
        } else {
            out.push(PathBuf::from(p));
        }
    }
    Ok(out)
}
