//! `bias-surface`: v* and v*/v over a (p, v) grid.

use std::path::PathBuf;

use clap::Args;
use contact_ve::bias;
use contact_ve::{BiasParams, WindowDistribution};
use serde::Serialize;

use crate::args::{Grid, WindowSpec};
use crate::failure::CmdResult;
use crate::output::{self, float, CsvOut, RunManifest};

pub const SURFACE_HEADER: [&str; 5] = ["p", "v", "v_star", "ratio", "v_star_over_v"];

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[arg(long, value_parser = Grid::parse_flag, default_value = "0.05,0.1,0.15")]
    pub p_grid: Grid,
    #[arg(long, value_parser = Grid::parse_flag, default_value = "0.05:0.95:0.005")]
    pub v_grid: Grid,
    #[arg(long, value_parser = WindowSpec::parse_flag, default_value = "geometric:0.3333333333333333")]
    pub window: WindowSpec,
    #[arg(long, default_value_t = bias::DEFAULT_R_TRUNC)]
    pub r_trunc: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub p: f64,
    pub v: f64,
    pub v_star: f64,
    pub ratio: f64,
}

impl SurfacePoint {
    pub fn v_star_over_v(&self) -> f64 {
        self.v_star / self.v
    }
}

pub fn surface(ps: &[f64], vs: &[f64], window: &WindowDistribution, r_trunc: usize) -> CmdResult<Vec<SurfacePoint>> {
    let mut points = Vec::with_capacity(ps.len() * vs.len());
    for &p in ps {
        let params = BiasParams::new(p, window.clone(), r_trunc)?;
        for &v in vs {
            points.push(SurfacePoint {
                p,
                v,
                v_star: bias::forward_map(&params, v),
                ratio: bias::exposure_ratio(&params, v),
            });
        }
    }
    Ok(points)
}

pub fn write_surface(path: &std::path::Path, points: &[SurfacePoint]) -> CmdResult {
    let mut out = CsvOut::create(path, &SURFACE_HEADER)?;
    for pt in points {
        out.row(&[
            float(pt.p),
            float(pt.v),
            float(pt.v_star),
            float(pt.ratio),
            float(pt.v_star_over_v()),
        ])?;
    }
    out.finish()
}

#[derive(Debug, Serialize)]
struct SurfaceConfig<'a> {
    p_grid: &'a [f64],
    v_grid: &'a [f64],
    window: &'a WindowSpec,
    r_trunc: usize,
}

pub fn run(args: &SurfaceArgs) -> CmdResult {
    let started = output::now();
    let window = args.window.resolve(None)?;
    if let Some(v) = args.v_grid.0.iter().find(|v| !(**v >= 0.0 && **v < 1.0)) {
        return Err(crate::failure::Failure::config(format!("v grid value {v} outside [0,1)")));
    }
    let points = surface(&args.p_grid.0, &args.v_grid.0, &window, args.r_trunc)?;
    write_surface(&args.out, &points)?;
    let window_echo = crate::simulate::embed_pmf(&args.window, &window);
    output::write_manifest(
        &args.out,
        &RunManifest {
            command: "bias-surface",
            tool_version: output::TOOL_VERSION,
            seed: None,
            resolved_config: SurfaceConfig {
                p_grid: &args.p_grid.0,
                v_grid: &args.v_grid.0,
                window: &window_echo,
                r_trunc: args.r_trunc,
            },
            outputs: vec![args.out.clone()],
            started,
            finished: output::now(),
        },
    )
}
