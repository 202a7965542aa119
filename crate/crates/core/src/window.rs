//! Infectious-window length distributions.
//!
//! A window entered on day `t` keeps the subject exposed on days
//! `t, t+1, ..., t+I-1`, where `I` takes values in `{1, 2, ...}`. The bias
//! formulas only consume the tail `P(I > s)`; the simulator also samples `I`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PMF_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowDistribution {
    /// `P(I = k) = (1-q)^(k-1) q` for `k >= 1`, mean `1/q`.
    Geometric { q: f64 },
    /// `pmf[k-1] = P(I = k)`.
    Empirical { pmf: Vec<f64> },
}

impl WindowDistribution {
    pub fn geometric(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidWindow(format!(
                "geometric success probability must lie in (0,1), got {q}"
            )));
        }
        Ok(Self::Geometric { q })
    }

    pub fn empirical(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidWindow("empty pmf".into()));
        }
        if let Some((i, p)) = pmf.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidWindow(format!(
                "pmf entry for k={} is not a nonnegative number: {p}",
                i + 1
            )));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidWindow(format!("pmf sums to {total}, not 1")));
        }
        Ok(Self::Empirical { pmf })
    }

    /// Reads a `k,prob` CSV with header. `k` must run 1, 2, ... without gaps
    /// once zero-probability rows are filled in; missing `k` values get mass 0.
    pub fn from_pmf_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path.as_ref())?;
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "k" || &headers[1] != "prob" {
            return Err(Error::Parse(format!(
                "pmf file header must be `k,prob`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut pmf: Vec<f64> = Vec::new();
        let mut last_k = 0usize;
        for rec in rdr.records() {
            let rec = rec?;
            let k: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad k value `{}`", &rec[0])))?;
            let prob: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad prob value `{}`", &rec[1])))?;
            if k <= last_k {
                return Err(Error::Parse(format!(
                    "k must be strictly increasing from 1, saw {k} after {last_k}"
                )));
            }
            pmf.resize(k - 1, 0.0);
            pmf.push(prob);
            last_k = k;
        }
        Self::empirical(pmf)
    }

    /// `P(I > s)`.
    pub fn tail(&self, s: usize) -> f64 {
        match self {
            Self::Geometric { q } => (1.0 - q).powi(s.min(i32::MAX as usize) as i32),
            Self::Empirical { pmf } => {
                if s == 0 {
                    return 1.0;
                }
                if s >= pmf.len() {
                    return 0.0;
                }
                // accumulate from the top so tail(s) = tail(s+1) + pmf(s+1)
                // holds in floating point, which keeps it monotone
                pmf[s..].iter().rev().sum::<f64>().min(1.0)
            }
        }
    }

    /// `P(I > R)`, the mass ignored by an `R`-truncated exposure ratio.
    pub fn tail_mass_beyond(&self, r_trunc: usize) -> f64 {
        self.tail(r_trunc)
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Geometric { q } => 1.0 / q,
            Self::Empirical { pmf } => pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum(),
        }
    }

    /// Draws a window length (always >= 1).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        match self {
            Self::Geometric { q } => {
                // inverse CDF: smallest k with 1 - (1-q)^k >= u
                let k = ((1.0 - u).ln() / (1.0 - q).ln()).ceil();
                if k < 1.0 {
                    1
                } else if k > u32::MAX as f64 {
                    u32::MAX
                } else {
                    k as u32
                }
            }
            Self::Empirical { pmf } => {
                let mut acc = 0.0;
                for (i, p) in pmf.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return (i + 1) as u32;
                    }
                }
                // u landed in the rounding gap above the cumulative sum
                pmf.iter().rposition(|p| *p > 0.0).map_or(1, |i| i + 1) as u32
            }
        }
    }
}
