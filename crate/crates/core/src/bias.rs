//! Exposure-imbalance bias of the Cox-based VE and its correction.
//!
//! Under rare window entry, the Cox-based VE `v*` relates to the per-contact
//! VE `v` through the ratio of exposure probabilities among those still
//! uninfected:
//!
//! ```text
//! ratio(v) = sum_{s=0}^{R} (1 - p(1-v))^s P(I > s) / sum_{s=0}^{R} (1 - p)^s P(I > s)
//! v*       = 1 - (1 - v) ratio(v)
//! ```
//!
//! Truncating at `R` can only shrink the ratio, so the corrected estimate
//! obtained by inverting this map errs low.

use serde::{Deserialize, Serialize};

use crate::cox::LogHrEstimate;
use crate::error::{Error, Result};
use crate::normal;
use crate::window::WindowDistribution;

pub const DEFAULT_R_TRUNC: usize = 10;
pub const BISECTION_TOL: f64 = 1e-12;
/// Lower end of the search bracket for negative Cox-based VE inputs.
pub const NEGATIVE_BRACKET_LO: f64 = -0.5;
/// Grid spacing of the monotonicity check run before every inversion.
pub const MONOTONE_GRID_STEP: f64 = 1e-3;
pub const SLOPE_STEP: f64 = 1e-6;
const MIN_SLOPE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    pub p: f64,
    pub window: WindowDistribution,
    #[serde(rename = "R")]
    pub r_trunc: usize,
    /// Full follow-up length for the untruncated ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_full: Option<usize>,
}

impl BiasParams {
    pub fn new(p: f64, window: WindowDistribution, r_trunc: usize) -> Result<Self> {
        let params = Self {
            p,
            window,
            r_trunc,
            t_full: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_t_full(mut self, t_full: usize) -> Result<Self> {
        self.t_full = Some(t_full);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0,1), got {}", self.p)));
        }
        if self.r_trunc == 0 {
            return Err(Error::InvalidParameter("R must be >= 1".into()));
        }
        if let Some(t) = self.t_full {
            if t <= self.r_trunc {
                return Err(Error::InvalidParameter(format!(
                    "full horizon {t} must exceed R = {}",
                    self.r_trunc
                )));
            }
        }
        Ok(())
    }

    pub fn truncation_tail(&self) -> f64 {
        self.window.tail_mass_beyond(self.r_trunc)
    }
}

/// `sum_{s=0}^{upper} base^s P(I > s)`.
fn survival_weighted_sum(window: &WindowDistribution, base: f64, upper: usize) -> f64 {
    let mut pow = 1.0;
    let mut total = 0.0;
    for s in 0..=upper {
        let tail = window.tail(s);
        if tail == 0.0 {
            break;
        }
        total += pow * tail;
        pow *= base;
    }
    total
}

/// Exposure-probability ratio summed up to an explicit limit.
pub fn exposure_ratio_upto(p: f64, window: &WindowDistribution, v: f64, upper: usize) -> f64 {
    let num = survival_weighted_sum(window, 1.0 - p * (1.0 - v), upper);
    let den = survival_weighted_sum(window, 1.0 - p, upper);
    num / den
}

/// Ratio of vaccine to placebo exposure probability, truncated at `R`.
pub fn exposure_ratio(params: &BiasParams, v: f64) -> f64 {
    exposure_ratio_upto(params.p, &params.window, v, params.r_trunc)
}

/// Ratio summed to `t_full` (falls back to `R` when no full horizon is set).
pub fn untruncated_ratio(params: &BiasParams, v: f64) -> f64 {
    exposure_ratio_upto(params.p, &params.window, v, params.t_full.unwrap_or(params.r_trunc))
}

/// Cox-based VE implied by per-contact VE `v`.
pub fn forward_map(params: &BiasParams, v: f64) -> f64 {
    1.0 - (1.0 - v) * exposure_ratio(params, v)
}

/// Implied log hazard ratio `log((1 - v) ratio(v))`.
pub fn log_hazard_ratio(params: &BiasParams, v: f64) -> f64 {
    ((1.0 - v) * exposure_ratio(params, v)).ln()
}

/// Checks that the forward map is strictly increasing on a grid over `[lo, hi]`.
pub fn check_monotone(params: &BiasParams, lo: f64, hi: f64) -> Result<()> {
    let mut prev = forward_map(params, lo);
    let mut i = 1usize;
    loop {
        let v = (lo + i as f64 * MONOTONE_GRID_STEP).min(hi);
        let cur = forward_map(params, v);
        if !(cur > prev) {
            return Err(Error::NotMonotone {
                at: v,
                p: params.p,
                r_trunc: params.r_trunc,
            });
        }
        if v >= hi {
            return Ok(());
        }
        prev = cur;
        i += 1;
    }
}

/// Lower bracket for a negative target: starts at -0.5 and doubles the
/// distance from 1 until the map drops below the target, staying where the
/// vaccine-arm survival base `1 - p(1-v)` is positive.
fn negative_bracket(params: &BiasParams, v_star: f64) -> Result<f64> {
    let floor = 1.0 - 1.0 / params.p;
    let mut lo = NEGATIVE_BRACKET_LO;
    while forward_map(params, lo) > v_star {
        let next = 1.0 - 2.0 * (1.0 - lo);
        if next <= floor || !next.is_finite() {
            return Err(Error::NoBracket { target: v_star, lo, hi: 1.0 });
        }
        lo = next;
    }
    Ok(lo)
}

/// Solution of `forward_map(v) = v_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub v: f64,
    /// Set when `v_star < 0` and the bracket was extended below zero.
    pub extended_bracket: bool,
}

/// Solves `forward_map(params, v) = v_star` by bisection.
///
/// For `v_star >= 0` the root lies in `[v_star, 1)` since the map never
/// exceeds the identity there. Negative inputs, which noisy null-effect fits
/// produce, are searched on `[-0.5, 1)` instead.
pub fn invert(params: &BiasParams, v_star: f64) -> Result<Inversion> {
    if !(v_star < 1.0) {
        return Err(Error::OutOfRange(v_star));
    }
    let extended_bracket = v_star < 0.0;
    let (mut lo, mut hi) = if extended_bracket {
        (negative_bracket(params, v_star)?, 1.0)
    } else {
        (v_star, 1.0)
    };
    check_monotone(params, lo, hi)?;

    let f_lo = forward_map(params, lo) - v_star;
    if f_lo > 0.0 {
        return Err(Error::NoBracket { target: v_star, lo, hi });
    }
    if f_lo == 0.0 {
        return Ok(Inversion { v: lo, extended_bracket });
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if forward_map(params, mid) - v_star <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Inversion {
        v: 0.5 * (lo + hi),
        extended_bracket,
    })
}

pub fn invert_map(params: &BiasParams, v_star: f64) -> Result<f64> {
    invert(params, v_star).map(|inv| inv.v)
}

/// `d beta / d v` by central difference with step `h`; one-sided near 1.
pub fn log_hazard_slope(params: &BiasParams, v: f64, h: f64) -> f64 {
    if v + h < 1.0 {
        (log_hazard_ratio(params, v + h) - log_hazard_ratio(params, v - h)) / (2.0 * h)
    } else {
        (log_hazard_ratio(params, v) - log_hazard_ratio(params, v - h)) / h
    }
}

/// Delta-method standard error of the corrected estimate at `v_hat`:
/// `SE(beta_hat) / |d beta / d v|`.
pub fn delta_se_at(params: &BiasParams, v_hat: f64, se_beta: f64) -> Result<f64> {
    let slope = log_hazard_slope(params, v_hat, SLOPE_STEP);
    if !(slope.abs() >= MIN_SLOPE) {
        return Err(Error::DegenerateDerivative(slope));
    }
    Ok(se_beta / slope.abs())
}

/// Delta-method SE of `v_hat = invert_map(v*_hat)`.
pub fn delta_se(params: &BiasParams, est: &LogHrEstimate) -> Result<f64> {
    let v_hat = invert_map(params, est.ve_star())?;
    delta_se_at(params, v_hat, est.se)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub v_hat: f64,
    pub se_v: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub v_star_input: f64,
    pub ratio_at_solution: f64,
    pub truncation_tail: f64,
    pub p: f64,
    #[serde(rename = "R")]
    pub r_trunc: usize,
    pub window: WindowDistribution,
    pub level: f64,
    /// Any of the three inversions needed a bracket below zero.
    pub negative_input: bool,
}

/// Corrected VE with a Wald-inverted confidence interval.
///
/// A null value `v0` is accepted when `|beta_hat - beta(v0)| < z SE(beta_hat)`.
/// Since `beta(v0)` is decreasing in `v0`, the acceptance set is the interval
/// between the inverses of `v*` at `beta_hat -/+ z SE`.
pub fn invert_ci(params: &BiasParams, est: &LogHrEstimate, level: f64) -> Result<CorrectionResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0,1), got {level}")));
    }
    if !(est.se >= 0.0) || !est.beta_hat.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "log hazard ratio {} with SE {} is not usable",
            est.beta_hat, est.se
        )));
    }
    let z = normal::two_sided_z(level);
    let v_star = est.ve_star();
    let point = invert(params, v_star)?;

    let (lower, upper, se_v) = if est.se == 0.0 {
        (point, point, 0.0)
    } else {
        let lower = invert(params, 1.0 - (est.beta_hat + z * est.se).exp())?;
        let upper = invert(params, 1.0 - (est.beta_hat - z * est.se).exp())?;
        (lower, upper, delta_se_at(params, point.v, est.se)?)
    };

    Ok(CorrectionResult {
        v_hat: point.v,
        se_v,
        ci_lower: lower.v,
        ci_upper: upper.v,
        v_star_input: v_star,
        ratio_at_solution: exposure_ratio(params, point.v),
        truncation_tail: params.truncation_tail(),
        p: params.p,
        r_trunc: params.r_trunc,
        window: params.window.clone(),
        level,
        negative_input: point.extended_bracket || lower.extended_bracket || upper.extended_bracket,
    })
}

/// SE of the log hazard ratio implied by a reported symmetric Wald interval
/// for the Cox-based VE: `(log(1 - lo) - log(1 - hi)) / (2 z)`.
pub fn se_from_ve_ci(ci_lower: f64, ci_upper: f64, level: f64) -> Result<f64> {
    if !(ci_lower < ci_upper) || !(ci_upper < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "CI ({ci_lower}, {ci_upper}) must satisfy lower < upper < 1"
        )));
    }
    let z = normal::two_sided_z(level);
    Ok(((1.0 - ci_lower).ln() - (1.0 - ci_upper).ln()) / (2.0 * z))
}
