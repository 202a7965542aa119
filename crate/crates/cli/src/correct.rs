//! `correct`: bias-corrected VE and Wald-inverted CI from a reported Cox fit.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use contact_ve::bias::{self, se_from_ve_ci};
use contact_ve::{BiasParams, CorrectionResult, LogHrEstimate};
use serde::Serialize;

use crate::args::{Grid, WindowSpec};
use crate::failure::{CmdResult, Failure};
use crate::output::{self, RunManifest};

#[derive(Debug, Args)]
pub struct CorrectArgs {
    /// Reported Cox-based VE (1 - hazard ratio).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "theta_hat")]
    pub ve_star: Option<f64>,
    /// Reported log hazard ratio.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_hat: Option<f64>,
    /// SE of the log hazard ratio.
    #[arg(long, conflicts_with_all = ["ci_lower", "ci_upper"])]
    pub se: Option<f64>,
    /// Lower end of the reported Cox-based VE interval.
    #[arg(long, allow_hyphen_values = true, requires = "ci_upper")]
    pub ci_lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "ci_lower")]
    pub ci_upper: Option<f64>,
    /// Per-contact transmissibility.
    #[arg(long, conflicts_with = "p_grid")]
    pub p: Option<f64>,
    /// Several transmissibilities: comma list or start:stop:step.
    #[arg(long, value_parser = Grid::parse_flag)]
    pub p_grid: Option<Grid>,
    #[arg(long, value_parser = WindowSpec::parse_flag, default_value = "geometric:0.3333333333333333")]
    pub window: WindowSpec,
    #[arg(long, default_value_t = bias::DEFAULT_R_TRUNC)]
    pub r_trunc: usize,
    /// Confidence level of both the reported and the corrected interval.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Also write the results (JSON lines) to this file, with a manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CorrectConfig<'a> {
    beta_hat: f64,
    se_beta: f64,
    ve_star: f64,
    ci_lower: Option<f64>,
    ci_upper: Option<f64>,
    p: &'a [f64],
    window: &'a WindowSpec,
    r_trunc: usize,
    level: f64,
}

/// Log hazard ratio estimate implied by the flags.
pub fn estimate_from_args(args: &CorrectArgs) -> CmdResult<LogHrEstimate> {
    let beta_hat = match (args.ve_star, args.theta_hat) {
        (Some(v), None) => {
            if !(v < 1.0) {
                return Err(Failure::config(format!("--ve-star must be < 1, got {v}")));
            }
            (1.0 - v).ln()
        }
        (None, Some(t)) => t,
        _ => return Err(Failure::config("supply exactly one of --ve-star or --theta-hat")),
    };
    if !beta_hat.is_finite() {
        return Err(Failure::config("point estimate is not finite"));
    }
    let ve_star = 1.0 - beta_hat.exp();
    let se = match (args.se, args.ci_lower, args.ci_upper) {
        (Some(se), None, None) => se,
        (None, Some(lo), Some(hi)) => {
            if !(lo <= ve_star && ve_star <= hi) {
                return Err(Failure::config(format!(
                    "interval ({lo}, {hi}) does not contain the point estimate {ve_star}"
                )));
            }
            se_from_ve_ci(lo, hi, args.level)?
        }
        _ => return Err(Failure::config("supply --se or both --ci-lower and --ci-upper")),
    };
    if !(se >= 0.0) || !se.is_finite() {
        return Err(Failure::config(format!("standard error must be finite and >= 0, got {se}")));
    }
    Ok(LogHrEstimate { beta_hat, se })
}

pub fn corrections(args: &CorrectArgs) -> CmdResult<Vec<CorrectionResult>> {
    let est = estimate_from_args(args)?;
    let ps = match (&args.p, &args.p_grid) {
        (Some(p), None) => vec![*p],
        (None, Some(grid)) => grid.0.clone(),
        _ => return Err(Failure::config("supply --p or --p-grid")),
    };
    let window = args.window.resolve(None)?;
    ps.iter()
        .map(|&p| {
            let params = BiasParams::new(p, window.clone(), args.r_trunc)?;
            Ok(bias::invert_ci(&params, &est, args.level)?)
        })
        .collect()
}

pub fn run(args: &CorrectArgs) -> CmdResult {
    let started = output::now();
    let results = corrections(args)?;
    let mut lines = Vec::new();
    for r in &results {
        lines.push(serde_json::to_string(r)?);
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for line in &lines {
        writeln!(lock, "{line}")?;
    }

    if let Some(path) = &args.out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, lines.join("\n") + "\n")?;
        let est = estimate_from_args(args)?;
        let ps: Vec<f64> = results.iter().map(|r| r.p).collect();
        output::write_manifest(
            path,
            &RunManifest {
                command: "correct",
                tool_version: output::TOOL_VERSION,
                seed: None,
                resolved_config: CorrectConfig {
                    beta_hat: est.beta_hat,
                    se_beta: est.se,
                    ve_star: est.ve_star(),
                    ci_lower: args.ci_lower,
                    ci_upper: args.ci_upper,
                    p: &ps,
                    window: &args.window,
                    r_trunc: args.r_trunc,
                    level: args.level,
                },
                outputs: vec![path.clone()],
                started,
                finished: output::now(),
            },
        )?;
    }
    Ok(())
}
