//! `simulate`: replicate trials, fit Cox per replicate, correct each estimate.

use std::path::{Path, PathBuf};

use clap::Args;
use contact_ve::bias;
use contact_ve::cox::{self, TieMethod};
use contact_ve::sim::{self, map_replicates};
use contact_ve::{BiasParams, TrialConfig, WindowDistribution};
use serde::{Deserialize, Serialize};

use crate::args::WindowSpec;
use crate::failure::{CmdResult, Failure};
use crate::output::{self, float, CsvOut, RunManifest};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON config (or a previous run's manifest); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_per_arm: Option<usize>,
    /// Daily window-entry probability.
    #[arg(long)]
    pub m: Option<f64>,
    /// Per-contact transmissibility.
    #[arg(long)]
    pub p: Option<f64>,
    /// Per-contact vaccine efficacy.
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub horizon: Option<u32>,
    /// `geometric:<q>` or `empirical:<path>`.
    #[arg(long, value_parser = WindowSpec::parse_flag)]
    pub window: Option<WindowSpec>,
    /// Truncation horizon R of the exposure ratio used for correction.
    #[arg(long)]
    pub r_trunc: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tie handling: efron or breslow.
    #[arg(long)]
    pub ties: Option<TieMethod>,
    /// Forbid entering a new window while already exposed.
    #[arg(long)]
    pub no_entry_while_exposed: bool,
    /// Per-replicate results CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every simulated dataset as `replicate_<i>.csv` here.
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
}

/// Fully resolved simulation settings, as echoed in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n_per_arm: usize,
    pub m: f64,
    pub p: f64,
    pub v: f64,
    pub horizon: u32,
    pub window: WindowSpec,
    pub seed: u64,
    pub replicates: usize,
    pub entry_while_exposed: bool,
    pub r_trunc: usize,
    pub ties: TieMethod,
}

/// Config file contents; every field optional so flags can fill the rest.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    n_per_arm: Option<usize>,
    m: Option<f64>,
    p: Option<f64>,
    v: Option<f64>,
    horizon: Option<u32>,
    window: Option<WindowSpec>,
    seed: Option<u64>,
    replicates: Option<usize>,
    entry_while_exposed: Option<bool>,
    r_trunc: Option<usize>,
    ties: Option<TieMethod>,
}

fn load_config_file(path: &Path) -> CmdResult<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    // accept a manifest and use its resolved configuration
    if let Some(inner) = value.get_mut("resolved_config") {
        value = inner.take();
    }
    Ok(serde_json::from_value(value)?)
}

impl SimulateArgs {
    pub fn resolve(&self) -> CmdResult<(SimulateConfig, TrialConfig)> {
        let file = match &self.config {
            Some(path) => load_config_file(path)?,
            None => ConfigFile::default(),
        };
        let base_dir = self.config.as_deref().and_then(Path::parent);
        let window_spec = self.window.clone().or(file.window).unwrap_or_default();
        // flag paths are relative to the working directory, file paths to the file
        let window_dir = if self.window.is_some() { None } else { base_dir };
        let window = window_spec.resolve(window_dir)?;

        let required = |flag: Option<f64>, file: Option<f64>, name: &str| {
            flag.or(file)
                .ok_or_else(|| Failure::config(format!("--{name} is required (flag or config field)")))
        };
        let config = SimulateConfig {
            n_per_arm: self.n_per_arm.or(file.n_per_arm).unwrap_or(5000),
            m: self.m.or(file.m).unwrap_or(0.01),
            p: required(self.p, file.p, "p")?,
            v: required(self.v, file.v, "v")?,
            horizon: self.horizon.or(file.horizon).unwrap_or(180),
            window: embed_pmf(&window_spec, &window),
            seed: self.seed.or(file.seed).unwrap_or(42),
            replicates: self.replicates.or(file.replicates).unwrap_or(500),
            entry_while_exposed: !self.no_entry_while_exposed && file.entry_while_exposed.unwrap_or(true),
            r_trunc: self.r_trunc.or(file.r_trunc).unwrap_or(bias::DEFAULT_R_TRUNC),
            ties: self.ties.or(file.ties).unwrap_or_default(),
        };
        let trial = TrialConfig {
            n_per_arm: config.n_per_arm,
            m: config.m,
            p: config.p,
            v: config.v,
            horizon: config.horizon,
            window,
            seed: config.seed,
            replicates: config.replicates,
            entry_while_exposed: config.entry_while_exposed,
        };
        trial.validate()?;
        BiasParams::new(config.p, trial.window.clone(), config.r_trunc)?;
        Ok((config, trial))
    }
}

/// Empirical windows are echoed with their pmf inline so a manifest is
/// self-contained.
pub fn embed_pmf(spec: &WindowSpec, dist: &WindowDistribution) -> WindowSpec {
    match dist {
        WindowDistribution::Empirical { pmf } => WindowSpec::Empirical {
            path: None,
            pmf: Some(pmf.clone()),
        },
        WindowDistribution::Geometric { .. } => spec.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateRow {
    pub theta_hat: f64,
    pub se: f64,
    pub ve_star_hat: f64,
    pub v_hat: f64,
    pub converged: bool,
    pub sar: f64,
}

impl ReplicateRow {
    pub fn usable(&self) -> bool {
        self.converged && self.v_hat.is_finite()
    }
}

/// Simulates, fits and corrects every replicate of `trial`.
pub fn run_replicates(
    trial: &TrialConfig,
    params: &BiasParams,
    ties: TieMethod,
    dataset_dir: Option<&Path>,
) -> Vec<ReplicateRow> {
    map_replicates(trial, |i, ds| {
        if let Some(dir) = dataset_dir {
            let path = dir.join(format!("replicate_{i}.csv"));
            if let Err(e) = std::fs::File::create(&path)
                .map_err(contact_ve::Error::from)
                .and_then(|f| ds.write_csv(std::io::BufWriter::new(f)))
            {
                eprintln!("replicate {i}: cannot write {}: {e}", path.display());
            }
        }
        let sar = sim::sar_ve_estimate(&ds).unwrap_or(f64::NAN);
        match cox::fit(&ds, ties) {
            Ok(fit) => {
                let v_hat = bias::invert_map(params, fit.ve_star_hat).unwrap_or_else(|e| {
                    eprintln!("replicate {i}: correction failed: {e}");
                    f64::NAN
                });
                ReplicateRow {
                    theta_hat: fit.theta_hat,
                    se: fit.se,
                    ve_star_hat: fit.ve_star_hat,
                    v_hat,
                    converged: fit.converged,
                    sar,
                }
            }
            Err(e) => {
                eprintln!("replicate {i}: fit failed: {e}");
                ReplicateRow {
                    theta_hat: f64::NAN,
                    se: f64::NAN,
                    ve_star_hat: f64::NAN,
                    v_hat: f64::NAN,
                    converged: false,
                    sar,
                }
            }
        }
    })
}

/// Mean and sample SD of the finite values in `xs`.
pub fn mean_sd(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = xs.into_iter().filter(|x| x.is_finite()).collect();
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub const REPLICATE_HEADER: [&str; 6] = ["replicate", "theta_hat", "se", "ve_star_hat", "v_hat", "converged"];

pub fn run(args: &SimulateArgs) -> CmdResult {
    let started = output::now();
    let (config, trial) = args.resolve()?;
    let params = BiasParams::new(config.p, trial.window.clone(), config.r_trunc)?;
    if let Some(dir) = &args.dataset_dir {
        std::fs::create_dir_all(dir)?;
    }
    let rows = run_replicates(&trial, &params, config.ties, args.dataset_dir.as_deref());

    let mut out = CsvOut::create(&args.out, &REPLICATE_HEADER)?;
    for (i, r) in rows.iter().enumerate() {
        out.row(&[
            i.to_string(),
            float(r.theta_hat),
            float(r.se),
            float(r.ve_star_hat),
            float(r.v_hat),
            r.converged.to_string(),
        ])?;
    }
    let ok: Vec<&ReplicateRow> = rows.iter().filter(|r| r.usable()).collect();
    let stats = [
        mean_sd(ok.iter().map(|r| r.theta_hat)),
        mean_sd(ok.iter().map(|r| r.se)),
        mean_sd(ok.iter().map(|r| r.ve_star_hat)),
        mean_sd(ok.iter().map(|r| r.v_hat)),
    ];
    // summary rows; the converged column holds the number of usable replicates
    for (label, pick) in [("mean", 0usize), ("sd", 1)] {
        let mut fields = vec![label.to_string()];
        fields.extend(stats.iter().map(|s| float(if pick == 0 { s.0 } else { s.1 })));
        fields.push(ok.len().to_string());
        out.row(&fields)?;
    }
    out.finish()?;

    let mut outputs = vec![args.out.clone()];
    if let Some(dir) = &args.dataset_dir {
        outputs.push(dir.clone());
    }
    output::write_manifest(
        &args.out,
        &RunManifest {
            command: "simulate",
            tool_version: output::TOOL_VERSION,
            seed: Some(config.seed),
            resolved_config: &config,
            outputs,
            started,
            finished: output::now(),
        },
    )?;
    eprintln!(
        "{} of {} replicates usable; mean ve_star_hat = {:.4}, mean v_hat = {:.4}",
        ok.len(),
        rows.len(),
        stats[2].0,
        stats[3].0
    );
    if ok.is_empty() {
        return Err(Failure::Numerical(anyhow::anyhow!("no replicate produced a usable fit")));
    }
    Ok(())
}
