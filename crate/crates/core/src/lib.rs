//! Per-contact vaccine efficacy under temporally correlated exposure.
//!
//! A Cox model that ignores exposure status underestimates the per-contact
//! VE when exposure comes in multi-day infectious windows: vaccinated
//! subjects survive their windows longer and so accrue more exposure. This
//! crate provides
//!
//! - [`window`]: infectious-window length distributions,
//! - [`sim`]: a discrete-time trial simulator with true exposure counts,
//! - [`cox`]: a binary-covariate Cox fit with Efron or Breslow ties,
//! - [`bias`]: the exposure-ratio bias map, its inverse, the delta-method SE
//!   and a Wald-inverted confidence interval for the corrected VE.

pub mod bias;
pub mod cox;
pub mod error;
pub mod normal;
pub mod sim;
pub mod window;

pub use bias::{
    delta_se, exposure_ratio, forward_map, invert_ci, invert_map, BiasParams, CorrectionResult,
};
pub use cox::{fit, CoxFit, LogHrEstimate, TieMethod};
pub use error::{Error, Result};
pub use sim::{sar_ve_estimate, simulate_trial, SubjectRecord, SurvivalDataset, TrialConfig};
pub use window::WindowDistribution;
