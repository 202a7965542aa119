//! Flag grammars shared by the subcommands.

use std::path::{Path, PathBuf};

use contact_ve::WindowDistribution;
use serde::{Deserialize, Serialize};

use crate::failure::{CmdResult, Failure};

/// Window distribution as given by the user. Empirical windows may be a
/// file path or an inline pmf, so manifests can embed the resolved pmf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowSpec {
    Geometric {
        q: f64,
    },
    Empirical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pmf: Option<Vec<f64>>,
    },
}

impl WindowSpec {
    /// `geometric:<q>` or `empirical:<path>`.
    pub fn parse_flag(s: &str) -> Result<Self, String> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("window `{s}` must look like geometric:<q> or empirical:<path>"))?;
        match kind {
            "geometric" => {
                let q = value
                    .parse()
                    .map_err(|_| format!("geometric parameter `{value}` is not a number"))?;
                Ok(Self::Geometric { q })
            }
            "empirical" => Ok(Self::Empirical {
                path: Some(PathBuf::from(value)),
                pmf: None,
            }),
            other => Err(format!("unknown window kind `{other}`")),
        }
    }

    /// Loads the distribution; relative paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: Option<&Path>) -> CmdResult<WindowDistribution> {
        let dist = match self {
            Self::Geometric { q } => WindowDistribution::geometric(*q)?,
            Self::Empirical { pmf: Some(pmf), .. } => WindowDistribution::empirical(pmf.clone())?,
            Self::Empirical { path: Some(path), .. } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                WindowDistribution::from_pmf_csv(&full)?
            }
            Self::Empirical { .. } => {
                return Err(Failure::config("empirical window needs a `path` or a `pmf`"))
            }
        };
        Ok(dist)
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self::Geometric { q: 1.0 / 3.0 }
    }
}

/// A parsed grid flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl Grid {
    pub fn parse_flag(s: &str) -> Result<Self, String> {
        parse_grid(s).map(Self)
    }
}

/// Comma list (`0.05,0.1`) or inclusive range (`start:stop:step`).
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{t}` is not a number"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || !(stop >= start) {
                return Err(format!("range `{s}` needs step > 0 and stop >= start"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            // snap to 12 decimals so 0.05 + 80 * 0.005 prints as 0.45
            (0..=n)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("grid `{s}` must be a comma list or start:stop:step")),
    };
    if values.is_empty() {
        return Err("empty grid".into());
    }
    Ok(values)
}
