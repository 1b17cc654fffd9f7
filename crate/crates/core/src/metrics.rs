//! Solution-space metrics of a pruned frame.
//!
//! `ν` (volume) is the negated mean of `ln r_i / ln(max r)` over the support,
//! where `r_i = η − z_i` is the slack of survivor `i`. `ε` (entropy) is the
//! mean of `z_i·e^(−z_i)` over the support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::viterbi::PruneOutcome;

/// Residuals below this are clamped before taking logs.
pub const RESIDUAL_FLOOR: f64 = 1e-9;

/// Which costs feed the entropy metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyMode {
    /// Raw accumulated path costs `z_i`.
    #[default]
    Literal,
    /// Costs relative to the frame minimum, `z_i − min z`. Keeps `ε` from
    /// underflowing to zero as path costs grow.
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub t: usize,
    pub epsilon: f64,
    pub nu: f64,
    pub support_size: usize,
}

/// Normalised log-residual volume `ν`.
pub fn volume_metric(outcome: &PruneOutcome) -> Result<f64> {
    if outcome.support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let clamped = || outcome.residuals.iter().map(|r| r.max(RESIDUAL_FLOOR));
    let max_r = clamped().fold(f64::NEG_INFINITY, f64::max);
    if max_r.is_infinite() {
        return Err(Error::UnboundedThreshold);
    }
    let log_max = max_r.ln();
    if log_max.abs() < 1e-9 {
        return Ok(-1.0);
    }
    let sum: f64 = clamped().map(|r| r.ln() / log_max).sum();
    Ok(-sum / outcome.support.len() as f64)
}

/// Entropy metric `ε`.
pub fn entropy_metric(outcome: &PruneOutcome, mode: EntropyMode) -> Result<f64> {
    if outcome.support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let offset = match mode {
        EntropyMode::Literal => 0.0,
        EntropyMode::Shifted => outcome.support_costs().fold(f64::INFINITY, f64::min),
    };
    let sum: f64 = outcome
        .support_costs()
        .map(|z| {
            let z = z - offset;
            z * (-z).exp()
        })
        .sum();
    Ok(sum / outcome.support.len() as f64)
}
