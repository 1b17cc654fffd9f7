//! Poisson request-count simulation.
//!
//! Each user emits a Poisson-distributed number of requests per interval. One
//! user at a time plays the attacker, whose rate follows a piecewise-constant
//! schedule that changes every `change_period` frames; the attacker role can
//! also move between users.

use std::path::Path;
use std::sync::OnceLock;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic simulation RNG.
///
/// xoshiro256** seeded through SplitMix64 from a single `u64`. The output
/// stream depends only on the seed, on every platform.
#[derive(Debug, Clone)]
pub struct SimRng(Xoshiro256StarStar);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

const LN_FACT_TABLE: usize = 1024;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for k in 1..LN_FACT_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// `ln k!`: exact accumulation below 1024, Stirling series above.
pub fn ln_factorial(k: u64) -> f64 {
    if (k as usize) < LN_FACT_TABLE {
        return ln_fact_table()[k as usize];
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "Poisson rate must be positive and finite, got {lambda}"
        )))
    }
}

/// `ln P[X = k]` for `X ~ Poisson(λ)`.
pub fn poisson_ln_pmf(k: u64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(-lambda + k as f64 * lambda.ln() - ln_factorial(k))
}

/// `P[X = k] = e^(−λ) λ^k / k!`, evaluated in log space.
pub fn poisson_pmf(k: u64, lambda: f64) -> Result<f64> {
    poisson_ln_pmf(k, lambda).map(f64::exp)
}

/// Rates above this are split into equal sub-rates.
const KNUTH_MAX_LAMBDA: f64 = 30.0;

fn knuth(lambda: f64, rng: &mut SimRng) -> u64 {
    let limit = (-lambda).exp();
    let mut k = 0u64;
    let mut p = rng.next_f64();
    while p > limit {
        k += 1;
        p *= rng.next_f64();
    }
    k
}

/// One Poisson variate. Rates above 30 are drawn as a sum of `⌈λ/30⌉`
/// independent variates of rate `λ/⌈λ/30⌉`.
pub fn sample_poisson(lambda: f64, rng: &mut SimRng) -> Result<u64> {
    check_lambda(lambda)?;
    if lambda <= KNUTH_MAX_LAMBDA {
        return Ok(knuth(lambda, rng));
    }
    let parts = (lambda / KNUTH_MAX_LAMBDA).ceil() as u64;
    let sub = lambda / parts as f64;
    Ok((0..parts).map(|_| knuth(sub, rng)).sum())
}

/// Attacker role moves to `user` from frame `start` onward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionChange {
    pub start: usize,
    pub user: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub users: usize,
    pub frames: usize,
    /// Mean requests per interval for each user while benign.
    pub benign_lambda: Vec<f64>,
    /// Attacker rate per `change_period`-frame segment. A single entry is a
    /// constant rate.
    pub attacker_lambda: Vec<f64>,
    pub change_period: usize,
    /// Breakpoints of the attacker's position; the first starts at frame 0.
    pub attacker_position: Vec<PositionChange>,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let cfg = |key: &str, msg: String| Error::config(key, msg);
        if self.users == 0 {
            return Err(cfg("scenario.n", "need at least one user".into()));
        }
        if self.frames == 0 {
            return Err(cfg("scenario.T", "need at least one frame".into()));
        }
        if self.benign_lambda.len() != self.users {
            return Err(cfg(
                "scenario.benign_lambda",
                format!(
                    "expected {} per-user rates, found {}",
                    self.users,
                    self.benign_lambda.len()
                ),
            ));
        }
        for &l in &self.benign_lambda {
            check_lambda(l).map_err(|e| cfg("scenario.benign_lambda", e.to_string()))?;
        }
        if self.attacker_lambda.is_empty() {
            return Err(cfg("scenario.attacker_lambda", "schedule is empty".into()));
        }
        for &l in &self.attacker_lambda {
            check_lambda(l).map_err(|e| cfg("scenario.attacker_lambda", e.to_string()))?;
        }
        if self.change_period == 0 {
            return Err(cfg("scenario.change_period", "must be at least 1".into()));
        }
        if self.attacker_lambda.len() > 1
            && self
                .attacker_lambda
                .len()
                .saturating_mul(self.change_period)
                < self.frames
        {
            return Err(cfg(
                "scenario.attacker_lambda",
                format!(
                    "{} segments of {} frames leave a gap before frame {}",
                    self.attacker_lambda.len(),
                    self.change_period,
                    self.frames
                ),
            ));
        }
        match self.attacker_position.first() {
            Some(p) if p.start == 0 => {}
            _ => {
                return Err(cfg(
                    "scenario.attacker_position",
                    "schedule must start at frame 0".into(),
                ))
            }
        }
        for pair in self.attacker_position.windows(2) {
            if pair[1].start <= pair[0].start {
                return Err(cfg(
                    "scenario.attacker_position",
                    "breakpoints must have strictly increasing start frames".into(),
                ));
            }
        }
        if let Some(p) = self.attacker_position.iter().find(|p| p.user >= self.users) {
            return Err(cfg(
                "scenario.attacker_position",
                format!("user {} out of range for {} users", p.user, self.users),
            ));
        }
        Ok(())
    }

    pub fn attacker_lambda_at(&self, t: usize) -> f64 {
        if self.attacker_lambda.len() == 1 {
            return self.attacker_lambda[0];
        }
        let seg = (t / self.change_period).min(self.attacker_lambda.len() - 1);
        self.attacker_lambda[seg]
    }

    pub fn attacker_at(&self, t: usize) -> usize {
        self.attacker_position
            .iter()
            .take_while(|p| p.start <= t)
            .last()
            .map_or(0, |p| p.user)
    }

    /// Rate of `user` at frame `t`.
    pub fn lambda(&self, user: usize, t: usize) -> f64 {
        if user == self.attacker_at(t) {
            self.attacker_lambda_at(t)
        } else {
            self.benign_lambda[user]
        }
    }

    /// Attacker position at every frame.
    pub fn true_positions(&self) -> Vec<usize> {
        (0..self.frames).map(|t| self.attacker_at(t)).collect()
    }

    /// Frame-weighted mean of the attacker rate schedule.
    pub fn mean_attacker_lambda(&self) -> f64 {
        (0..self.frames)
            .map(|t| self.attacker_lambda_at(t))
            .sum::<f64>()
            / self.frames.max(1) as f64
    }
}

/// Request counts of every user in one interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestFrame {
    pub t: usize,
    pub counts: Vec<u64>,
}

/// Draws `frames × users` counts, frame-major, user-minor, from one RNG
/// stream seeded with `scenario.seed`.
pub fn generate(scenario: &Scenario) -> Result<Vec<RequestFrame>> {
    scenario.validate()?;
    let mut rng = SimRng::new(scenario.seed);
    (0..scenario.frames)
        .map(|t| {
            let counts = (0..scenario.users)
                .map(|j| sample_poisson(scenario.lambda(j, t), &mut rng))
                .collect::<Result<Vec<_>>>()?;
            Ok(RequestFrame { t, counts })
        })
        .collect()
}

/// Writes `t,user_0,...,user_{n-1}` rows.
pub fn write_traffic_csv(path: &Path, frames: &[RequestFrame]) -> Result<()> {
    let users = frames.first().map_or(0, |f| f.counts.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..users).map(|j| format!("user_{j}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for f in frames {
        let mut row = vec![f.t.to_string()];
        row.extend(f.counts.iter().map(u64::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_traffic_csv(path: &Path) -> Result<Vec<RequestFrame>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let users = header.len().saturating_sub(1);
    if header.get(0) != Some("t") || users == 0 {
        return Err(format_error(path, "expected header `t,user_0,...`"));
    }
    let mut frames = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| format_error(path, &format!("row {}: {e}", line + 1)))
        };
        let t = parse(&rec[0])? as usize;
        if t != frames.len() {
            return Err(format_error(
                path,
                &format!("row {}: expected t = {}", line + 1, frames.len()),
            ));
        }
        let counts = rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        frames.push(RequestFrame { t, counts });
    }
    Ok(frames)
}

fn format_error(path: &Path, message: &str) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    format_error(path, &e.to_string())
}
