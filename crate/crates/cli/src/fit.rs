//! `fit`: Cox fit of dataset CSV files, one JSON object per file.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use contact_ve::cox::{self, TieMethod};
use contact_ve::SurvivalDataset;

use crate::failure::{CmdResult, Failure};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV files (`subject_id,arm,time,status[,exposure_days,exposure_events]`).
    #[arg(required = true)]
    pub datasets: Vec<PathBuf>,
    #[arg(long, default_value = "efron")]
    pub ties: TieMethod,
}

pub fn run(args: &FitArgs) -> CmdResult {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for path in &args.datasets {
        let file = std::fs::File::open(path)
            .map_err(|e| Failure::config(format!("cannot open {}: {e}", path.display())))?;
        let ds = SurvivalDataset::read_csv(std::io::BufReader::new(file))?;
        let fit = cox::fit(&ds, args.ties)?;
        writeln!(out, "{}", serde_json::to_string(&fit)?)?;
    }
    Ok(())
}
