//! Cox proportional hazards fit for a single binary treatment covariate.
//!
//! Daily event times are heavily tied, so the data are first collapsed to one
//! row per distinct event time holding at-risk and event counts per arm. The
//! log partial likelihood is then a function of those counts alone and the
//! Newton iteration costs O(#events) per step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{SubjectRecord, SurvivalDataset};

pub const MAX_ITERATIONS: usize = 100;
const SCORE_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMethod {
    #[default]
    Efron,
    Breslow,
}

impl std::str::FromStr for TieMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "efron" => Ok(Self::Efron),
            "breslow" => Ok(Self::Breslow),
            other => Err(Error::Parse(format!("unknown tie method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    /// Log hazard ratio, vaccine vs placebo.
    pub theta_hat: f64,
    pub se: f64,
    /// `1 - exp(theta_hat)`.
    pub ve_star_hat: f64,
    pub n_events: u64,
    pub tie_method: TieMethod,
    pub converged: bool,
    pub iterations: usize,
}

impl CoxFit {
    pub fn estimate(&self) -> LogHrEstimate {
        LogHrEstimate {
            beta_hat: self.theta_hat,
            se: self.se,
        }
    }
}

/// A log hazard ratio with its standard error, however obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogHrEstimate {
    pub beta_hat: f64,
    pub se: f64,
}

impl LogHrEstimate {
    pub fn from_ve_star(ve_star: f64, se: f64) -> Self {
        Self {
            beta_hat: (1.0 - ve_star).ln(),
            se,
        }
    }

    pub fn ve_star(&self) -> f64 {
        1.0 - self.beta_hat.exp()
    }
}

impl From<&CoxFit> for LogHrEstimate {
    fn from(fit: &CoxFit) -> Self {
        fit.estimate()
    }
}

/// Counts at one distinct event time.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TimeSlice {
    at_risk: [f64; 2],
    events: [f64; 2],
}

/// Risk-set summary of a two-arm dataset.
#[derive(Debug, Clone)]
pub struct RiskSets {
    slices: Vec<TimeSlice>,
    events: [u64; 2],
}

impl RiskSets {
    pub fn new(records: &[SubjectRecord]) -> Self {
        let max_t = records.iter().map(|r| r.time).max().unwrap_or(0) as usize;
        // per-day counts of exits (events + censorings) and events, per arm
        let mut exits = vec![[0u64; 2]; max_t + 1];
        let mut deaths = vec![[0u64; 2]; max_t + 1];
        let mut at_risk = [0u64; 2];
        let mut events = [0u64; 2];
        for r in records {
            let a = r.arm as usize;
            at_risk[a] += 1;
            exits[r.time as usize][a] += 1;
            if r.status == 1 {
                deaths[r.time as usize][a] += 1;
                events[a] += 1;
            }
        }
        let mut slices = Vec::new();
        for t in 0..=max_t {
            let d = deaths[t];
            if d[0] + d[1] > 0 {
                slices.push(TimeSlice {
                    at_risk: [at_risk[0] as f64, at_risk[1] as f64],
                    events: [d[0] as f64, d[1] as f64],
                });
            }
            at_risk[0] -= exits[t][0];
            at_risk[1] -= exits[t][1];
        }
        Self { slices, events }
    }

    pub fn events_per_arm(&self) -> [u64; 2] {
        self.events
    }

    /// Log partial likelihood, score and observed information at `theta`.
    pub fn evaluate(&self, theta: f64, ties: TieMethod) -> (f64, f64, f64) {
        let x = theta.exp();
        let (mut loglik, mut score, mut info) = (0.0, 0.0, 0.0);
        for s in &self.slices {
            let [n0, n1] = s.at_risk;
            let [d0, d1] = s.events;
            let d = d0 + d1;
            // risk-set sum and its theta-derivative (A is binary, so the
            // second derivative of the treated part equals the first)
            let total = n0 + n1 * x;
            let treated = n1 * x;
            let tied_total = d0 + d1 * x;
            let tied_treated = d1 * x;
            loglik += d1 * theta;
            score += d1;
            match ties {
                TieMethod::Breslow => {
                    let frac = treated / total;
                    loglik -= d * total.ln();
                    score -= d * frac;
                    info += d * frac * (1.0 - frac);
                }
                TieMethod::Efron => {
                    let dn = d as usize;
                    for k in 0..dn {
                        let c = k as f64 / d;
                        let denom = total - c * tied_total;
                        let frac = (treated - c * tied_treated) / denom;
                        loglik -= denom.ln();
                        score -= frac;
                        info += frac * (1.0 - frac);
                    }
                }
            }
        }
        (loglik, score, info)
    }
}

pub fn fit(dataset: &SurvivalDataset, ties: TieMethod) -> Result<CoxFit> {
    fit_records(&dataset.records, ties)
}

/// Newton-Raphson with step halving on the concave log partial likelihood.
pub fn fit_records(records: &[SubjectRecord], ties: TieMethod) -> Result<CoxFit> {
    let risk = RiskSets::new(records);
    let events = risk.events_per_arm();
    if events[0] + events[1] == 0 {
        return Err(Error::NoEvents);
    }
    if let Some(empty_arm) = (0..2u8).find(|&a| events[a as usize] == 0) {
        return Err(Error::MonotoneLikelihood { empty_arm });
    }

    let mut theta = 0.0;
    let (mut loglik, mut score, mut info) = risk.evaluate(theta, ties);
    for iteration in 1..=MAX_ITERATIONS {
        if !(info > 0.0) || !loglik.is_finite() {
            break;
        }
        let mut step = score / info;
        let mut next = risk.evaluate(theta + step, ties);
        let mut halvings = 0;
        // near the optimum the gain drops below the rounding noise of loglik,
        // which must not trigger halving
        let slack = 1e-12 * (1.0 + loglik.abs());
        while !(next.0 >= loglik - slack) && halvings < 60 {
            step *= 0.5;
            next = risk.evaluate(theta + step, ties);
            halvings += 1;
        }
        theta += step;
        (loglik, score, info) = next;
        if score.abs() < SCORE_TOL || step.abs() < STEP_TOL {
            if !(info > 0.0) {
                break;
            }
            return Ok(CoxFit {
                theta_hat: theta,
                se: (1.0 / info).sqrt(),
                ve_star_hat: 1.0 - theta.exp(),
                n_events: events[0] + events[1],
                tie_method: ties,
                converged: true,
                iterations: iteration,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        theta,
        score,
        information: info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, arm: u8, time: u32, status: u8) -> SubjectRecord {
        SubjectRecord {
            subject_id: id,
            arm,
            time,
            status,
            exposure_days: status as u32,
            exposure_events: status as u32,
        }
    }

    fn four_subjects() -> Vec<SubjectRecord> {
        vec![rec(0, 1, 1, 1), rec(1, 0, 2, 1), rec(2, 1, 3, 0), rec(3, 0, 3, 0)]
    }

    #[test]
    fn closed_form_four_subjects() {
        // score reduces to x^2 = 2 with x = exp(theta)
        for ties in [TieMethod::Efron, TieMethod::Breslow] {
            let f = fit_records(&four_subjects(), ties).unwrap();
            assert!((f.theta_hat - 0.5 * 2f64.ln()).abs() < 1e-10);
            assert!((f.ve_star_hat - (1.0 - 2f64.sqrt())).abs() < 1e-10);
            assert_eq!(f.ve_star_hat, 1.0 - f.theta_hat.exp());
            assert_eq!(f.n_events, 2);
            assert!(f.converged && f.se > 0.0);
        }
    }

    #[test]
    fn one_sided_events_are_monotone() {
        let recs = vec![rec(0, 0, 1, 1), rec(1, 0, 2, 1), rec(2, 1, 3, 0), rec(3, 1, 3, 0)];
        assert!(matches!(
            fit_records(&recs, TieMethod::Efron),
            Err(Error::MonotoneLikelihood { empty_arm: 1 })
        ));
        let recs = vec![rec(0, 0, 3, 0), rec(1, 1, 3, 0)];
        assert!(matches!(fit_records(&recs, TieMethod::Efron), Err(Error::NoEvents)));
    }

    #[test]
    fn mirrored_arms_give_zero() {
        let mut recs = Vec::new();
        let times = [1, 1, 2, 3, 3, 3, 5, 8, 8, 10];
        let status = [1, 1, 0, 1, 1, 0, 1, 1, 0, 0];
        for (i, (t, s)) in times.iter().zip(status).enumerate() {
            recs.push(rec(2 * i as u64, 1, *t, s));
            recs.push(rec(2 * i as u64 + 1, 0, *t, s));
        }
        for ties in [TieMethod::Efron, TieMethod::Breslow] {
            let f = fit_records(&recs, ties).unwrap();
            assert!(f.theta_hat.abs() < 1e-10);
            assert!(f.ve_star_hat.abs() < 1e-10);
        }
    }

    #[test]
    fn efron_equals_breslow_without_ties() {
        let recs = vec![
            rec(0, 1, 1, 1),
            rec(1, 0, 2, 1),
            rec(2, 0, 3, 1),
            rec(3, 1, 4, 0),
            rec(4, 1, 5, 1),
            rec(5, 0, 6, 1),
            rec(6, 1, 7, 0),
        ];
        let e = fit_records(&recs, TieMethod::Efron).unwrap();
        let b = fit_records(&recs, TieMethod::Breslow).unwrap();
        assert_eq!(e.theta_hat, b.theta_hat);
        assert_eq!(e.se, b.se);
    }

    #[test]
    fn score_and_information_match_finite_differences() {
        let recs = vec![
            rec(0, 1, 1, 1),
            rec(1, 0, 1, 1),
            rec(2, 0, 1, 1),
            rec(3, 1, 2, 1),
            rec(4, 0, 2, 1),
            rec(5, 1, 4, 0),
            rec(6, 0, 4, 1),
        ];
        let risk = RiskSets::new(&recs);
        for ties in [TieMethod::Efron, TieMethod::Breslow] {
            for theta in [-1.3, -0.2, 0.0, 0.7] {
                let h = 1e-5;
                let (_, score, info) = risk.evaluate(theta, ties);
                let (lp, sp, _) = risk.evaluate(theta + h, ties);
                let (lm, sm, _) = risk.evaluate(theta - h, ties);
                assert!(((lp - lm) / (2.0 * h) - score).abs() < 1e-8);
                assert!((-(sp - sm) / (2.0 * h) - info).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn parses_tie_method() {
        assert_eq!("Efron".parse::<TieMethod>().unwrap(), TieMethod::Efron);
        assert_eq!("breslow".parse::<TieMethod>().unwrap(), TieMethod::Breslow);
        assert!("exact".parse::<TieMethod>().is_err());
    }

    #[test]
    fn fit_json_shape() {
        let f = fit_records(&four_subjects(), TieMethod::Efron).unwrap();
        let v = serde_json::to_value(f).unwrap();
        for key in ["theta_hat", "se", "ve_star_hat", "n_events", "tie_method", "converged", "iterations"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["tie_method"], "efron");
    }
}
