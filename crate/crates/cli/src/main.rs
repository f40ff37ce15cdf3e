//! Scenario-driven command line for the electromechanical control toolkit.
//!
//! Exit codes: 0 success/certified, 1 verification failed, 2 configuration or
//! schema error, 3 integration failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phem_cli::{bundled_names, bundled_scenario, load_scenario, pipeline, run_simulate, run_verify};
use phem_core::error::Error;

#[derive(Parser)]
#[command(name = "phem", version, about = "Port-Hamiltonian electromechanical control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify a scenario's side conditions; exit 0 iff certified.
    Verify {
        /// Scenario path or bundled name.
        scenario: String,
        /// Output directory for the report.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate every case of a scenario and write traces + metrics.
    Simulate {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Simulate even when verification does not certify the base config.
        #[arg(long)]
        force: bool,
        /// Sample initial conditions from the verification region.
        #[arg(long)]
        seed_ics: Option<u64>,
        /// Parallel case workers.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Coupled-damping (or gain) sweep: rate study + per-point metrics.
    Sweep {
        scenario: String,
        /// Override key, e.g. controller.d_d
        #[arg(long, default_value = "controller.d_d")]
        parameter: String,
        /// Grid: `start:stop:count` or comma list.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Hessian-gap parameter for the rate bound.
        #[arg(long, default_value_t = 1e-5)]
        gamma: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List bundled scenarios (optionally print one).
    List {
        /// Print this bundled scenario's JSON.
        name: Option<String>,
    },
}

fn classify(e: &Error) -> u8 {
    match e {
        Error::Integration { .. } | Error::Domain { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Verify { scenario, out } => {
            let sc = load_scenario(&scenario)?;
            let outcome = run_verify(&sc)?;
            phem_cli::output::print_report(&outcome.report, outcome.min_grade);
            let dir = phem_cli::output::scenario_dir(&out, &sc.name);
            phem_cli::output::write_atomic(
                &dir.join("report.json"),
                &phem_cli::output::report_json(&outcome.report, outcome.min_grade),
            )?;
            Ok(if outcome.certified { 0 } else { 1 })
        }
        Command::Simulate { scenario, out, force, seed_ics, jobs } => {
            let sc = load_scenario(&scenario)?;
            let outcome = run_simulate(&sc, &out, force, seed_ics, jobs)?;
            println!(
                "verification: grade {} (required {}) -> {}",
                outcome.verify.report.grade.name(),
                outcome.verify.min_grade.name(),
                if outcome.verify.certified { "certified" } else { "NOT certified (forced)" }
            );
            let mut worst_abort = None;
            for c in &outcome.cases {
                println!(
                    "case {:24} final_error {:.4e}  crossings {:4}  l2 {:.4e}  rate {}",
                    c.label,
                    c.metrics.final_error,
                    c.metrics.zero_crossings,
                    c.metrics.l2_final,
                    c.metrics
                        .fitted_rate
                        .map(|r| format!("{r:.4e}"))
                        .unwrap_or_else(|| "-".into()),
                );
                if let Some(a) = &c.record.aborted {
                    println!("  run aborted at t = {:.6}: {}", a.time, a.reason);
                    worst_abort = Some(a.time);
                }
            }
            println!("artifacts under {}", out.join(&sc.name).display());
            Ok(if worst_abort.is_some() { 3 } else { 0 })
        }
        Command::Sweep { scenario, parameter, grid, gamma, out, jobs } => {
            let sc = load_scenario(&scenario)?;
            let grid = pipeline::parse_grid(&grid)?;
            let rows = pipeline::run_sweep(&sc, &parameter, &grid, gamma, &out, jobs)?;
            println!("{} rows written to {}", rows.len(), out.join(&sc.name).join("sweep.csv").display());
            for r in &rows {
                println!(
                    "{:>12.4e}  ph {}  hurwitz {}  sigma {}  crossings {}",
                    r.d_d,
                    r.ph_ok,
                    r.hurwitz_ok,
                    r.sigma.map(|s| format!("{s:.4e}")).unwrap_or_else(|| "-".into()),
                    r.metrics.as_ref().map(|m| m.zero_crossings.to_string()).unwrap_or_default(),
                );
            }
            Ok(0)
        }
        Command::List { name } => {
            match name {
                Some(n) => match bundled_scenario(&n) {
                    Some(text) => println!("{text}"),
                    None => {
                        return Err(Error::Config(format!(
                            "unknown bundled scenario '{n}' (have: {})",
                            bundled_names().join(", ")
                        )))
                    }
                },
                None => {
                    for n in bundled_names() {
                        println!("{n}");
                    }
                }
            }
            Ok(0)
        }
    }
}
