//! Discrete-time vaccine trial simulator under the infectious-window model.
//!
//! Each subject, independently and on each day while uninfected, enters a new
//! infectious window with probability `m`. A window entered on day `t` exposes
//! the subject on days `t..t+I-1`. Every active window gives one exposure per
//! day, and each exposure infects with probability `p` (placebo) or `p(1-v)`
//! (vaccine). The first infection removes the subject from follow-up.
//!
//! Randomness is keyed by `(seed, replicate, subject)`: the ChaCha key holds
//! the seed and replicate index verbatim and the subject id selects the
//! stream, so any replicate or subject can be regenerated in isolation and
//! results do not depend on how work is split across threads.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::window::WindowDistribution;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n_per_arm: usize,
    /// Daily probability of entering a new infectious window.
    pub m: f64,
    /// Per-exposure infection probability without vaccine.
    pub p: f64,
    /// Per-contact vaccine efficacy.
    pub v: f64,
    pub horizon: u32,
    pub window: WindowDistribution,
    pub seed: u64,
    pub replicates: usize,
    /// Whether a subject already inside a window can enter another one.
    #[serde(default = "default_true")]
    pub entry_while_exposed: bool,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, x: f64| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in (0,1), got {x}")))
            }
        };
        open_unit("m", self.m)?;
        open_unit("p", self.p)?;
        open_unit("v", self.v)?;
        if self.n_per_arm == 0 {
            return Err(Error::InvalidParameter("n_per_arm must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: u64,
    /// 0 = placebo, 1 = vaccine.
    pub arm: u8,
    /// Infection day, or the horizon when censored.
    pub time: u32,
    /// 1 = infected, 0 = censored.
    pub status: u8,
    /// Days with at least one active window, up to and including exit.
    pub exposure_days: u32,
    /// Active windows summed over days (one exposure per window per day).
    pub exposure_events: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    pub records: Vec<SubjectRecord>,
    /// Generating configuration; absent for datasets read from disk.
    pub config_echo: Option<TrialConfig>,
}

/// Per-arm totals used by diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmSummary {
    pub subjects: u64,
    pub infections: u64,
    pub exposure_days: u64,
    pub exposure_events: u64,
    /// Subject-days at risk: days `1..=time` for every subject.
    pub at_risk_days: u64,
}

impl ArmSummary {
    pub fn exposure_days_per_at_risk_day(&self) -> f64 {
        self.exposure_days as f64 / self.at_risk_days as f64
    }
}

pub const DATASET_HEADER: [&str; 6] = [
    "subject_id",
    "arm",
    "time",
    "status",
    "exposure_days",
    "exposure_events",
];

impl SurvivalDataset {
    pub fn from_records(records: Vec<SubjectRecord>) -> Self {
        Self { records, config_echo: None }
    }

    /// Totals for placebo (`[0]`) and vaccine (`[1]`) arms.
    pub fn arm_summaries(&self) -> [ArmSummary; 2] {
        let mut out = [ArmSummary::default(); 2];
        for r in &self.records {
            let s = &mut out[r.arm as usize];
            s.subjects += 1;
            s.infections += r.status as u64;
            s.exposure_days += r.exposure_days as u64;
            s.exposure_events += r.exposure_events as u64;
            s.at_risk_days += r.time as u64;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(DATASET_HEADER)?;
        for r in &self.records {
            wtr.write_record(&[
                r.subject_id.to_string(),
                r.arm.to_string(),
                r.time.to_string(),
                r.status.to_string(),
                r.exposure_days.to_string(),
                r.exposure_events.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the dataset CSV. The `exposure_days` and `exposure_events`
    /// columns are optional so externally produced survival data can be fit.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let required = |name: &str| {
            col(name).ok_or_else(|| Error::Parse(format!("dataset is missing column `{name}`")))
        };
        let (id_c, arm_c, time_c, status_c) =
            (required("subject_id")?, required("arm")?, required("time")?, required("status")?);
        let (days_c, events_c) = (col("exposure_days"), col("exposure_events"));

        fn field<T: std::str::FromStr>(rec: &csv::StringRecord, c: usize, line: usize) -> Result<T> {
            let raw = rec.get(c).unwrap_or("").trim();
            raw.parse()
                .map_err(|_| Error::Parse(format!("row {line}: cannot parse `{raw}`")))
        }

        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let r = SubjectRecord {
                subject_id: field(&rec, id_c, line)?,
                arm: field(&rec, arm_c, line)?,
                time: field(&rec, time_c, line)?,
                status: field(&rec, status_c, line)?,
                exposure_days: days_c.map_or(Ok(0), |c| field(&rec, c, line))?,
                exposure_events: events_c.map_or(Ok(0), |c| field(&rec, c, line))?,
            };
            if r.arm > 1 || r.status > 1 {
                return Err(Error::Parse(format!("row {line}: arm and status must be 0 or 1")));
            }
            if r.time == 0 {
                return Err(Error::Parse(format!("row {line}: time must be >= 1")));
            }
            records.push(r);
        }
        Ok(Self::from_records(records))
    }
}

/// ChaCha key for a replicate. The seed and replicate index are stored
/// verbatim, so distinct `(seed, replicate)` pairs never share a key.
pub fn replicate_key(seed: u64, replicate_index: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate_index.to_le_bytes());
    key[16..].copy_from_slice(b"contact-ve/trial");
    key
}

pub fn subject_rng(seed: u64, replicate_index: u64, subject_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(replicate_key(seed, replicate_index));
    rng.set_stream(subject_id);
    rng
}

/// Days until the next window entry, counting the current day as 1.
/// `u64::MAX` when entry is impossible.
fn entry_gap<R: Rng + ?Sized>(rng: &mut R, log_no_entry: f64) -> u64 {
    let u: f64 = rng.random();
    if log_no_entry == 0.0 {
        return u64::MAX;
    }
    let k = ((1.0 - u).ln() / log_no_entry).ceil();
    if k < 1.0 {
        1
    } else if k >= u64::MAX as f64 {
        u64::MAX
    } else {
        k as u64
    }
}

fn simulate_subject(config: &TrialConfig, rng: &mut ChaCha8Rng, subject_id: u64, arm: u8) -> SubjectRecord {
    let horizon = config.horizon as u64;
    let p_arm = if arm == 1 { config.p * (1.0 - config.v) } else { config.p };
    let log_no_entry = (-config.m).ln_1p();

    // last exposed day (inclusive) of each active window
    let mut window_ends: Vec<u64> = Vec::new();
    let mut next_entry = Some(entry_gap(rng, log_no_entry));
    let mut exposure_days = 0u32;
    let mut exposure_events = 0u32;
    let mut t = 1u64;

    let record = |time: u64, status: u8, days: u32, events: u32| SubjectRecord {
        subject_id,
        arm,
        time: time as u32,
        status,
        exposure_days: days,
        exposure_events: events,
    };

    while t <= horizon {
        window_ends.retain(|&end| end >= t);
        if window_ends.is_empty() {
            let entry = *next_entry.get_or_insert_with(|| (t - 1).saturating_add(entry_gap(rng, log_no_entry)));
            if entry > horizon {
                break;
            }
            t = entry;
        }
        if next_entry == Some(t) {
            let len = config.window.sample(rng) as u64;
            window_ends.push(t + len - 1);
            next_entry = if config.entry_while_exposed {
                Some(t.saturating_add(entry_gap(rng, log_no_entry)))
            } else {
                None
            };
        }

        exposure_days += 1;
        exposure_events += window_ends.len() as u32;
        for _ in 0..window_ends.len() {
            if rng.random::<f64>() < p_arm {
                return record(t, 1, exposure_days, exposure_events);
            }
        }
        t += 1;
    }
    record(horizon, 0, exposure_days, exposure_events)
}

/// Simulates one trial. Subjects `0..n_per_arm` are placebo, the rest vaccine.
/// The output depends only on `config` and `replicate_index`.
pub fn simulate_trial(config: &TrialConfig, replicate_index: u64) -> SurvivalDataset {
    let n = config.n_per_arm as u64;
    let records = (0..2 * n)
        .map(|id| {
            let arm = u8::from(id >= n);
            let mut rng = subject_rng(config.seed, replicate_index, id);
            simulate_subject(config, &mut rng, id, arm)
        })
        .collect();
    SurvivalDataset {
        records,
        config_echo: Some(config.clone()),
    }
}

/// Simulates replicates `0..config.replicates` in parallel on the current
/// rayon pool and applies `f` to each; results come back in replicate order.
pub fn map_replicates<T, F>(config: &TrialConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, SurvivalDataset) -> T + Sync,
{
    (0..config.replicates as u64)
        .into_par_iter()
        .map(|i| f(i, simulate_trial(config, i)))
        .collect()
}

/// Exposure-conditioned (secondary-attack-rate) VE:
/// `1 - (infections_1 / exposures_1) / (infections_0 / exposures_0)`.
pub fn sar_ve_estimate(dataset: &SurvivalDataset) -> Result<f64> {
    let [placebo, vaccine] = dataset.arm_summaries();
    sar_ve_from_counts(
        vaccine.infections,
        vaccine.exposure_events,
        placebo.infections,
        placebo.exposure_events,
    )
}

pub fn sar_ve_from_counts(
    vacc_infections: u64,
    vacc_exposures: u64,
    plac_infections: u64,
    plac_exposures: u64,
) -> Result<f64> {
    if vacc_exposures == 0 || plac_exposures == 0 {
        return Err(Error::UndefinedEstimate("an arm has no exposure events"));
    }
    if plac_infections == 0 {
        return Err(Error::UndefinedEstimate("placebo arm has no infections"));
    }
    let vacc_rate = vacc_infections as f64 / vacc_exposures as f64;
    let plac_rate = plac_infections as f64 / plac_exposures as f64;
    Ok(1.0 - vacc_rate / plac_rate)
}
