use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dse_core::dynamics::{FaultScenario, Study};
use dse_core::harness::{self, complex_matrix_csv, powerflow_csv, trajectory_csv};
use dse_core::{cases, powerflow, reduction, Error, Result};

#[derive(Parser)]
#[command(name = "dse", version, about = "Transient simulation and dynamic state estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or preset name.
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the power flow of a case.
    Powerflow {
        case: String,
        #[arg(long, default_value_t = powerflow::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = powerflow::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Write the bus table as CSV here instead of printing it.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulate a fault scenario and write the trajectory.
    Simulate {
        case: String,
        #[arg(long)]
        fault_bus: usize,
        #[arg(long, default_value_t = 1.0)]
        t_fault: f64,
        #[arg(long, default_value_t = 2.0)]
        cycles: f64,
        /// Line removed at clearing, as `FROM-TO`.
        #[arg(long, value_parser = parse_line)]
        clear_line: (usize, usize),
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 10)]
        substeps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kron-reduce a case at its power-flow solution.
    Reduce {
        case: String,
        /// Directory for y_red.csv and r_v.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_line(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['-', ','])
        .ok_or_else(|| format!("expected FROM-TO, got '{s}'"))?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn write(path: &PathBuf, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn solve(case: &cases::NetworkCase) -> Result<powerflow::PowerFlowSolution> {
    powerflow::solve_power_flow(case, powerflow::DEFAULT_TOL, powerflow::DEFAULT_MAX_ITER).map_err(|e| e.in_stage("powerflow"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = harness::resolve_config(&config).map_err(|e| e.in_stage("config"))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if out.is_some() {
                cfg.out = out;
            }
            let report = harness::run_experiment(&cfg)?;
            print!("{}", report.render());
            for f in &report.filters {
                println!("{} time: {:.3} s", f.kind.as_str(), f.seconds);
            }
            println!("wall time: {:.3} s", report.wall_seconds);
        }
        Command::Powerflow { case, tol, max_iter, csv } => {
            let case = cases::resolve(&case).map_err(|e| e.in_stage("case"))?;
            let pf = powerflow::solve_power_flow(&case, tol, max_iter).map_err(|e| e.in_stage("powerflow"))?;
            let table = powerflow_csv(&case, &pf);
            match csv {
                Some(path) => write(&path, &table).map_err(|e| e.in_stage("output"))?,
                None => print!("{table}"),
            }
            println!("converged in {} iterations, max mismatch {:e}", pf.iterations, pf.max_mismatch);
        }
        Command::Simulate {
            case,
            fault_bus,
            t_fault,
            cycles,
            clear_line,
            t_end,
            dt,
            substeps,
            out,
        } => {
            let case = cases::resolve(&case).map_err(|e| e.in_stage("case"))?;
            let scenario = FaultScenario {
                fault_bus,
                t_fault,
                clearing_cycles: cycles,
                cleared_line: clear_line,
                t_end,
                dt,
            };
            let pf = solve(&case)?;
            let study = Study::prepare(&case, &pf, &scenario).map_err(|e| e.in_stage("reduction"))?;
            let traj = study.simulate(substeps).map_err(|e| e.in_stage("simulate"))?;
            let text = trajectory_csv(&traj);
            match out {
                Some(path) => write(&path, &text).map_err(|e| e.in_stage("output"))?,
                None => print!("{text}"),
            }
        }
        Command::Reduce { case, out } => {
            let case = cases::resolve(&case).map_err(|e| e.in_stage("case"))?;
            let pf = solve(&case)?;
            let net = reduction::reduce(&case, &pf).map_err(|e| e.in_stage("reduction"))?;
            let (y, r) = (complex_matrix_csv(&net.y_red), complex_matrix_csv(&net.r_v));
            match out {
                Some(dir) => {
                    write(&dir.join("y_red.csv"), &y).map_err(|e| e.in_stage("output"))?;
                    write(&dir.join("r_v.csv"), &r).map_err(|e| e.in_stage("output"))?;
                }
                None => print!("y_red\n{y}r_v\n{r}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
