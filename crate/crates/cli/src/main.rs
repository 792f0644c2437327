use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridsim_cli::{
    bench_case, expand_cases, run_opf, run_pf, run_sim, CliError, RunReport, BENCH_HEADER, EXIT_INPUT, EXIT_OK,
};
use gridsim_core::opf::IpmOptions;
use gridsim_core::powerflow::{PfOptions, Start};

#[derive(Parser)]
#[command(name = "gridsim", version, about = "Power flow, OPF and quasi-steady-state simulation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Convergence tolerance (pu for PF, scaled KKT norm for OPF).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Write the JSON report here ("-" for stdout).
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    /// Output directory for simulation channels.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 5)]
    repeat: usize,
    #[arg(long, global = true)]
    quiet: bool,
    /// Start the power flow from the voltages stored in the case.
    #[arg(long, global = true)]
    warm: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the power flow of a Matpower case.
    Pf { case: PathBuf },
    /// Solve the optimal power flow of a Matpower case.
    Opf { case: PathBuf },
    /// Run a YAML simulation configuration.
    Sim { config: PathBuf },
    /// Time PF and OPF solves; prints a TSV table.
    Bench {
        #[arg(required = true)]
        cases: Vec<String>,
    },
}

impl Global {
    fn pf(&self) -> PfOptions {
        let d = PfOptions::default();
        PfOptions {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            start: if self.warm { Start::Warm } else { Start::Flat },
            ..d
        }
    }

    fn ipm(&self) -> IpmOptions {
        let d = IpmOptions::default();
        IpmOptions { tol: self.tol.unwrap_or(d.tol), max_iter: self.max_iter.unwrap_or(d.max_iter), ..d }
    }
}

fn emit(report: &RunReport, g: &Global) -> Result<i32, CliError> {
    if !g.quiet {
        eprintln!("{}", report.summary());
    }
    match g.json.as_deref() {
        Some(p) if p == Path::new("-") => print!("{}", report.to_json()),
        Some(p) => std::fs::write(p, report.to_json()).map_err(|e| CliError::Io { path: p.into(), msg: e.to_string() })?,
        None => {}
    }
    Ok(report.exit_code())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Pf { case } => emit(&run_pf(case, &g.pf())?, g),
        Command::Opf { case } => emit(&run_opf(case, &g.ipm())?, g),
        Command::Sim { config } => emit(&run_sim(config, &g.out)?, g),
        Command::Bench { cases } => {
            let paths = expand_cases(cases)?;
            println!("{BENCH_HEADER}");
            let mut rows = Vec::new();
            for p in &paths {
                let row = bench_case(p, g.repeat, &g.pf(), &g.ipm());
                println!("{}", row.tsv());
                rows.push(row);
            }
            if let Some(p) = &g.json {
                let text = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
                std::fs::write(p, text).map_err(|e| CliError::Io { path: p.clone(), msg: e.to_string() })?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_INPUT
    });
    ExitCode::from(code as u8)
}
