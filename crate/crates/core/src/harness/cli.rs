//! `riemann-sa run | verify | list`.
//!
//! Exit codes: 0 success, 1 check or run failure, 2 configuration error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::{ExperimentConfig, ExperimentKind};
use super::experiments::run_experiment;
use super::report::{sidecar_path, write_outputs};
use super::verify::{run_verification_suite, SuiteReport, CHECKS};
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "riemann-sa", version, about = "Stochastic approximation on manifolds and constraint sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a TOML config and write its CSV report.
    Run { config: PathBuf },
    /// Run comma-separated verification checks and print a JSON summary.
    Verify { checks: String },
    /// List experiments and checks.
    List,
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { checks } => {
            let names: Vec<&str> = checks.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if names.is_empty() {
                eprintln!("error: no checks given");
                return EXIT_CONFIG;
            }
            cmd_verify(&names)
        }
        Command::List => {
            println!("experiments:");
            for k in ExperimentKind::ALL {
                println!("  {:<20} {}", k.name(), k.description());
            }
            println!("checks:");
            for (name, desc) in CHECKS {
                println!("  {name:<20} {desc}");
            }
            EXIT_OK
        }
    }
}

fn print_suite(report: &SuiteReport) {
    println!("{}", serde_json::to_string_pretty(report).expect("report serialises"));
}

fn cmd_verify(names: &[&str]) -> i32 {
    match run_verification_suite(names) {
        Ok(rep) => {
            print_suite(&rep);
            if rep.passed {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e @ Error::UnknownCheck(_)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn cmd_run(path: &std::path::Path) -> i32 {
    let cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("error: run failed: {e}");
            return EXIT_FAILURE;
        }
    };
    if let Err(e) = write_outputs(&cfg, &outcome) {
        eprintln!("error: {e}");
        return EXIT_FAILURE;
    }
    println!(
        "{}: {} steps, wrote {} and {}",
        cfg.experiment.name(),
        cfg.n_steps,
        cfg.output_path.display(),
        sidecar_path(&cfg.output_path).display()
    );
    for (k, v) in &outcome.summary {
        println!("  {k} = {v:e}");
    }
    if cfg.verify.is_empty() {
        return EXIT_OK;
    }
    cmd_verify(&cfg.verify.iter().map(String::as_str).collect::<Vec<_>>())
}
