//! Adaptive leniency control.
//!
//! Every frame runs one Viterbi step under the current `θ`, prunes, and
//! measures `ε` and `ν`. Once `τ` samples have been collected, a frame whose
//! `ε` deviates from the recent mean by a relative margin of at least `α`
//! moves `θ` by a factor `1 ± β`: up when `ν` is at or below its recent mean,
//! down otherwise. The new `θ` applies from the next frame on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{entropy_metric, volume_metric, EntropyMode, MetricSample};
use crate::viterbi::{
    backtrack, initial_front, prune, prune_threshold, step, HmmCosts, Lattice, ObservationModel,
};

pub const DEFAULT_ALPHA: f64 = 0.25;
pub const DEFAULT_BETA: f64 = 0.0005;
pub const DEFAULT_THETA0: f64 = 2.5;
pub const DEFAULT_TAU: usize = 50;
pub const DEFAULT_THETA_MIN: f64 = 1.01;
pub const DEFAULT_THETA_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    /// Relative `ε` deviation that triggers an adaptation.
    pub alpha: f64,
    /// Fractional step applied to `θ`.
    pub beta: f64,
    /// History window length.
    pub tau: usize,
    pub theta0: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub entropy_mode: EntropyMode,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            tau: DEFAULT_TAU,
            theta0: DEFAULT_THETA0,
            theta_min: DEFAULT_THETA_MIN,
            theta_max: DEFAULT_THETA_MAX,
            entropy_mode: EntropyMode::Literal,
        }
    }
}

impl ControllerParams {
    /// Parameters under which `θ` never moves from `theta0`.
    pub fn fixed(theta0: f64) -> Self {
        ControllerParams {
            alpha: f64::INFINITY,
            beta: 0.0,
            theta0,
            theta_max: f64::INFINITY,
            ..Default::default()
        }
    }

    /// Pruning disabled altogether.
    pub fn unpruned() -> Self {
        Self::fixed(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(format!("controller.{key}"), msg));
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return bad("alpha", format!("must be >= 0, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad("beta", format!("must lie in [0, 1), got {}", self.beta));
        }
        if self.tau == 0 {
            return bad("tau", "must be at least 1".into());
        }
        if self.theta_min.is_nan() || self.theta_min <= 1.0 {
            return bad(
                "theta_min",
                format!("must exceed 1, got {}", self.theta_min),
            );
        }
        if self.theta_max.is_nan() || self.theta_max < self.theta_min {
            return bad(
                "theta_max",
                format!("must be >= theta_min, got {}", self.theta_max),
            );
        }
        if self.theta0.is_nan() || self.theta0 < self.theta_min || self.theta0 > self.theta_max {
            return bad(
                "theta0",
                format!(
                    "must lie in [{}, {}], got {}",
                    self.theta_min, self.theta_max, self.theta0
                ),
            );
        }
        Ok(())
    }
}

/// Append-only metric series with a sliding-window mean.
#[derive(Debug, Clone, Default)]
pub struct MetricHistory {
    samples: Vec<MetricSample>,
    tau: usize,
}

impl MetricHistory {
    pub fn new(tau: usize) -> Self {
        MetricHistory {
            samples: Vec::new(),
            tau: tau.max(1),
        }
    }

    pub fn push(&mut self, sample: MetricSample) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn samples(&self) -> &[MetricSample] {
        &self.samples
    }

    fn window(&self) -> &[MetricSample] {
        &self.samples[self.samples.len().saturating_sub(self.tau)..]
    }

    fn window_mean(&self, f: impl Fn(&MetricSample) -> f64) -> f64 {
        let w = self.window();
        if w.is_empty() {
            return 0.0;
        }
        w.iter().map(f).sum::<f64>() / w.len() as f64
    }

    /// Mean `ε` over the most recent `min(len, τ)` samples.
    pub fn epsilon_mean(&self) -> f64 {
        self.window_mean(|s| s.epsilon)
    }

    /// Mean `ν` over the most recent `min(len, τ)` samples.
    pub fn nu_mean(&self) -> f64 {
        self.window_mean(|s| s.nu)
    }
}

/// Relative-deviation test on `ε` against the window mean.
pub fn should_adapt(epsilon: f64, history: &MetricHistory, alpha: f64) -> bool {
    let m = history.epsilon_mean();
    let deviation = if m == 0.0 {
        if epsilon == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (epsilon - m).abs() / m
    };
    deviation >= alpha
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    None,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::None => "none",
        }
    }
}

/// Unclamped step of `θ`: loosen when `ν` is at or below its recent mean,
/// tighten otherwise.
pub fn adapt_direction(nu: f64, history: &MetricHistory) -> Direction {
    if nu <= history.nu_mean() {
        Direction::Up
    } else {
        Direction::Down
    }
}

/// `θ·(1+β)` or `θ·(1−β)` per [`adapt_direction`], clamped to
/// `[theta_min, theta_max]`.
pub fn adapt_theta(theta: f64, nu: f64, history: &MetricHistory, params: &ControllerParams) -> f64 {
    let next = match adapt_direction(nu, history) {
        Direction::Up => (1.0 + params.beta) * theta,
        _ => (1.0 - params.beta) * theta,
    };
    next.clamp(params.theta_min, params.theta_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    /// Leniency in force while frame `t` was decoded.
    pub theta: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub support_size: usize,
    pub adapted: bool,
    pub direction: Direction,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of (up, down) adaptations.
    pub fn adaptation_counts(&self) -> (usize, usize) {
        self.rows
            .iter()
            .fold((0, 0), |(u, d), r| match r.direction {
                Direction::Up => (u + 1, d),
                Direction::Down => (u, d + 1),
                Direction::None => (u, d),
            })
    }

    pub fn mean_support_size(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.support_size as f64).sum::<f64>() / self.rows.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub path: Vec<usize>,
    pub lattice: Lattice,
    pub trace: RunTrace,
}

/// Runs adaptive pruning over the first `frames` observations.
pub fn run<O: ObservationModel>(
    frames: usize,
    model: &HmmCosts<O>,
    observations: &[O::Symbol],
    params: &ControllerParams,
) -> Result<RunOutput> {
    params.validate()?;
    if frames == 0 {
        return Err(Error::Domain("frame count must be at least 1".into()));
    }
    if observations.len() < frames {
        return Err(Error::ShortObservations {
            needed: frames,
            found: observations.len(),
        });
    }

    let pruning = params.theta0.is_finite();
    let mut history = MetricHistory::new(params.tau);
    let mut lattice = Lattice::new();
    let mut trace = RunTrace {
        rows: Vec::with_capacity(frames),
    };
    let mut theta = params.theta0;
    let mut front = None;

    for (t, sigma) in observations[..frames].iter().enumerate() {
        let (x, backpointers) = match &front {
            None => (initial_front(model, sigma)?, None),
            Some(prev) => {
                let s = step(prev, model, sigma)?;
                (s.x, Some(s.backpointers))
            }
        };
        let outcome = prune(&x, prune_threshold(&x, theta)?)?;
        let epsilon = entropy_metric(&outcome, params.entropy_mode)?;
        let nu = if pruning {
            volume_metric(&outcome)?
        } else {
            f64::NAN
        };

        let theta_used = theta;
        let mut direction = Direction::None;
        if pruning && t >= params.tau && should_adapt(epsilon, &history, params.alpha) {
            direction = adapt_direction(nu, &history);
            theta = adapt_theta(theta, nu, &history, params);
        }

        history.push(MetricSample {
            t,
            epsilon,
            nu,
            support_size: outcome.support_size(),
        });
        lattice.push(&outcome, backpointers.as_deref())?;
        trace.rows.push(TraceRow {
            t,
            theta: theta_used,
            epsilon,
            nu,
            support_size: outcome.support_size(),
            adapted: direction != Direction::None,
            direction,
        });
        front = Some(outcome.z);
    }

    let path = backtrack(&lattice)?;
    Ok(RunOutput {
        path,
        lattice,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(eps: &[f64], nu: &[f64], tau: usize) -> MetricHistory {
        let mut h = MetricHistory::new(tau);
        for (t, (&e, &n)) in eps.iter().zip(nu).enumerate() {
            h.push(MetricSample {
                t,
                epsilon: e,
                nu: n,
                support_size: 1,
            });
        }
        h
    }

    #[test]
    fn window_mean_uses_recent_entries() {
        let h = history(&[10.0, 1.0, 2.0, 3.0], &[0.0; 4], 3);
        assert_eq!(h.epsilon_mean(), 2.0);
        let h = history(&[4.0, 6.0], &[0.0; 2], 5);
        assert_eq!(h.epsilon_mean(), 5.0);
        let h = history(&[0.7; 9], &[0.7; 9], 4);
        assert!((h.nu_mean() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn should_adapt_cases() {
        let h = history(&[1.0, 1.0], &[0.0; 2], 2);
        assert!(should_adapt(1.3, &h, 0.25));
        assert!(!should_adapt(1.2, &h, 0.25));
        assert!(!should_adapt(1.0, &h, 0.25));
        assert!(should_adapt(1.0, &h, 0.0));

        let zeros = history(&[0.0, 0.0], &[0.0; 2], 2);
        assert!(!should_adapt(0.0, &zeros, 0.25));
        assert!(should_adapt(1e-30, &zeros, 0.25));
        assert!(should_adapt(0.0, &zeros, 0.0));
    }

    #[test]
    fn adapt_theta_cases() {
        let p = ControllerParams::default();
        let h = history(&[1.0], &[0.5], 1);
        assert!((adapt_theta(2.5, 0.2, &h, &p) - 2.50125).abs() < 1e-12);
        assert!((adapt_theta(2.5, 0.9, &h, &p) - 2.49875).abs() < 1e-12);
        assert!((adapt_theta(2.5, 0.5, &h, &p) - 2.50125).abs() < 1e-12);

        let frozen = ControllerParams { beta: 0.0, ..p };
        assert_eq!(adapt_theta(2.5, 0.2, &h, &frozen), 2.5);
        assert_eq!(adapt_theta(2.5, 0.9, &h, &frozen), 2.5);

        let tight = ControllerParams {
            theta_min: 2.4999,
            ..p
        };
        assert_eq!(adapt_theta(2.5, 0.9, &h, &tight), 2.4999);
    }

    #[test]
    fn validation_names_offending_key() {
        let p = ControllerParams {
            theta0: 0.5,
            ..Default::default()
        };
        match p.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "controller.theta0"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ControllerParams {
            beta: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ControllerParams {
            tau: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ControllerParams::fixed(2.5).validate().is_ok());
        assert!(ControllerParams::unpruned().validate().is_ok());
    }
}
