//! Attacker localisation as hidden-state decoding.
//!
//! State `i` is the hypothesis "user `i` currently holds the attacker role".
//! A frame's cost under hypothesis `i` is the joint negative log-likelihood of
//! every user's request count, with user `i` at the attacker rate and everyone
//! else at their benign rate.

use serde::{Deserialize, Serialize};

use crate::controller::{run, ControllerParams, RunTrace};
use crate::error::{Error, Result};
use crate::traffic::{generate, poisson_ln_pmf, RequestFrame, Scenario};
use crate::tropical::{CostMatrix, StateVector};
use crate::viterbi::{HmmCosts, ObservationModel};

pub const DEFAULT_P_STAY: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocaliserConfig {
    /// Probability that the attacker keeps its position between frames.
    pub p_stay: f64,
    /// Rate the decoder assumes for the attacker.
    pub attacker_lambda: f64,
    /// Rates the decoder assumes for each user while benign.
    pub benign_lambda: Vec<f64>,
}

impl LocaliserConfig {
    /// Hypothesis rates matching the scenario: its benign rates and the
    /// frame-weighted mean of its attacker schedule.
    pub fn matching(scenario: &Scenario, p_stay: f64) -> Self {
        LocaliserConfig {
            p_stay,
            attacker_lambda: scenario.mean_attacker_lambda(),
            benign_lambda: scenario.benign_lambda.clone(),
        }
    }

    pub fn validate(&self, users: usize) -> Result<()> {
        if !(self.p_stay > 0.0 && self.p_stay <= 1.0) {
            return Err(Error::config(
                "localiser.p_stay",
                format!("must lie in (0, 1], got {}", self.p_stay),
            ));
        }
        if users == 1 && self.p_stay < 1.0 {
            return Err(Error::config(
                "localiser.p_stay",
                "a single-user model cannot move; p_stay must be 1",
            ));
        }
        if !(self.attacker_lambda.is_finite() && self.attacker_lambda > 0.0) {
            return Err(Error::config(
                "localiser.attacker_lambda",
                format!("must be positive, got {}", self.attacker_lambda),
            ));
        }
        if self.benign_lambda.len() != users {
            return Err(Error::config(
                "localiser.benign_lambda",
                format!("expected {users} rates, found {}", self.benign_lambda.len()),
            ));
        }
        if let Some(l) = self
            .benign_lambda
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::config(
                "localiser.benign_lambda",
                format!("must be positive, got {l}"),
            ));
        }
        Ok(())
    }
}

/// Per-hypothesis observation costs for one frame of request counts.
pub fn observation_costs(frame: &RequestFrame, config: &LocaliserConfig) -> Result<StateVector> {
    let n = config.benign_lambda.len();
    if frame.counts.len() != n {
        return Err(Error::Dimension {
            context: "request frame",
            expected: n,
            found: frame.counts.len(),
        });
    }
    let mut benign_total = 0.0;
    let mut swap = Vec::with_capacity(n);
    for (&c, &lb) in frame.counts.iter().zip(&config.benign_lambda) {
        let benign = -poisson_ln_pmf(c, lb)?;
        let attacker = -poisson_ln_pmf(c, config.attacker_lambda)?;
        benign_total += benign;
        swap.push(attacker - benign);
    }
    StateVector::new(
        swap.into_iter()
            .map(|d| (benign_total + d).max(0.0))
            .collect(),
    )
}

/// Transition costs: `−ln p_stay` on the diagonal, `−ln((1 − p_stay)/(n − 1))`
/// elsewhere (`+∞` when `p_stay = 1`).
pub fn build_transition(n: usize, p_stay: f64) -> Result<CostMatrix> {
    if n == 0 {
        return Err(Error::config("scenario.n", "need at least one state"));
    }
    if !(p_stay > 0.0 && p_stay <= 1.0) {
        return Err(Error::config(
            "localiser.p_stay",
            format!("must lie in (0, 1], got {p_stay}"),
        ));
    }
    if n == 1 && p_stay < 1.0 {
        return Err(Error::config(
            "localiser.p_stay",
            "a single-user model cannot move; p_stay must be 1",
        ));
    }
    let stay = -p_stay.ln();
    let leave = if p_stay == 1.0 {
        f64::INFINITY
    } else {
        -((1.0 - p_stay) / (n - 1) as f64).ln()
    };
    let mut m = CostMatrix::filled(n, n, leave)?;
    for i in 0..n {
        m.set(i, i, stay)?;
    }
    Ok(m)
}

/// Observation model binding request frames to hypothesis costs.
#[derive(Debug, Clone)]
pub struct PoissonObservations(pub LocaliserConfig);

impl ObservationModel for PoissonObservations {
    type Symbol = RequestFrame;

    fn costs(&self, frame: &RequestFrame) -> Result<StateVector> {
        observation_costs(frame, &self.0)
    }
}

/// Builds the `n`-state model: uniform initial costs `−ln(1/n)`, the
/// stay/leave transition matrix and Poisson observation costs.
pub fn build_model(config: &LocaliserConfig) -> Result<HmmCosts<PoissonObservations>> {
    let n = config.benign_lambda.len();
    config.validate(n)?;
    HmmCosts::new(
        StateVector::filled(n, (n as f64).ln())?,
        build_transition(n, config.p_stay)?,
        PoissonObservations(config.clone()),
    )
}

#[derive(Debug, Clone)]
pub struct LocalisationResult {
    pub decoded: Vec<usize>,
    pub truth: Vec<usize>,
    pub frame_accuracy: f64,
    pub mean_support_size: f64,
    pub trace: RunTrace,
}

/// Decodes already-available traffic against known true positions.
pub fn localise_frames(
    frames: &[RequestFrame],
    truth: &[usize],
    config: &LocaliserConfig,
    params: &ControllerParams,
) -> Result<LocalisationResult> {
    if truth.len() != frames.len() {
        return Err(Error::Dimension {
            context: "true positions",
            expected: frames.len(),
            found: truth.len(),
        });
    }
    let model = build_model(config)?;
    let out = run(frames.len(), &model, frames, params)?;
    let hits = out.path.iter().zip(truth).filter(|(d, t)| d == t).count();
    Ok(LocalisationResult {
        frame_accuracy: hits as f64 / frames.len() as f64,
        mean_support_size: out.trace.mean_support_size(),
        decoded: out.path,
        truth: truth.to_vec(),
        trace: out.trace,
    })
}

/// Simulates the scenario's traffic and localises the attacker.
pub fn localise(
    scenario: &Scenario,
    config: &LocaliserConfig,
    params: &ControllerParams,
) -> Result<LocalisationResult> {
    config.validate(scenario.users)?;
    let frames = generate(scenario)?;
    localise_frames(&frames, &scenario.true_positions(), config, params)
}
