//! Command-line front end for contact-ve.

mod args;
mod correct;
mod failure;
mod fit;
mod output;
mod reproduce;
mod simulate;
mod surface;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::failure::{CmdResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "contact-ve", version, about = "Per-contact vaccine efficacy: bias quantification and correction for Cox-based estimates")]
struct Cli {
    /// Worker threads for replicate simulation (default: all cores).
    #[arg(long, global = true, env = "CONTACT_VE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate trials, fit a Cox model to each, and correct the estimates.
    Simulate(simulate::SimulateArgs),
    /// Correct a reported Cox-based VE and its confidence interval.
    Correct(correct::CorrectArgs),
    /// Tabulate v* and v*/v over a grid of p and v.
    BiasSurface(surface::SurfaceArgs),
    /// Regenerate the reference table, simulation summary and bias surface.
    Reproduce(reproduce::ReproduceArgs),
    /// Fit the Cox model to dataset CSV files.
    Fit(fit::FitArgs),
}

fn dispatch(command: &Command) -> CmdResult {
    match command {
        Command::Simulate(a) => simulate::run(a),
        Command::Correct(a) => correct::run(a),
        Command::BiasSurface(a) => surface::run(a),
        Command::Reproduce(a) => reproduce::run(a),
        Command::Fit(a) => fit::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(failure::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Config(e.into()));
    let result = pool.and_then(|pool| pool.install(|| dispatch(&cli.command)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
