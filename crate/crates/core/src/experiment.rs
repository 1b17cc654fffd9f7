//! Experiment configuration, execution and output files.
//!
//! A run is described by one JSON document (schema version 1):
//!
//! ```json
//! {
//!   "version": 1,
//!   "scenario": {
//!     "n": 8, "T": 5000,
//!     "benign_lambda": 10.0,
//!     "attacker_lambda": [6.0, 8.0, 5.0, 7.0, 4.0],
//!     "change_period": 1000,
//!     "attacker_position": [{"start": 0, "user": 3}],
//!     "seed": 7
//!   },
//!   "localiser": { "p_stay": 0.99, "attacker_lambda": 6.0, "benign_lambda": 10.0 },
//!   "controller": { "alpha": 0.25, "beta": 0.0005, "tau": 50, "theta0": 2.5,
//!                   "theta_min": 1.01, "theta_max": 1e6, "entropy_mode": "literal" },
//!   "output_dir": "out",
//!   "emit_traffic": false,
//!   "mode": "adaptive",
//!   "replay_traffic": null
//! }
//! ```
//!
//! Only `scenario.n`, `scenario.T`, `scenario.benign_lambda` and
//! `scenario.attacker_lambda` are required. Rates may be a scalar or a list;
//! a scalar `benign_lambda` applies to every user and a scalar
//! `attacker_position` pins the attacker to one user. Defaults:
//! `change_period` 1000, `attacker_position` 0, `seed` 0, `p_stay` 0.99,
//! hypothesis rates equal to the scenario's (attacker: frame-weighted mean of
//! the schedule), `alpha` 0.25, `beta` 0.0005, `tau` 50, `theta0` 2.5,
//! `theta_min` 1.01, `theta_max` 1e6, `entropy_mode` "literal",
//! `output_dir` "out", `mode` "adaptive".

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerParams, Direction};
use crate::error::{Error, Result};
use crate::localiser::{localise_frames, LocalisationResult, LocaliserConfig, DEFAULT_P_STAY};
use crate::traffic::{generate, read_traffic_csv, write_traffic_csv, PositionChange, Scenario};

pub const CONFIG_VERSION: u32 = 1;
pub const TRACE_VERSION: u32 = 1;
pub const TRACE_HEADER: [&str; 9] = [
    "t",
    "theta",
    "epsilon",
    "nu",
    "survivors",
    "decoded_state",
    "true_state",
    "adapted",
    "direction",
];
pub const DEFAULT_CHANGE_PERIOD: usize = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Adaptive,
    #[serde(alias = "fixedTheta")]
    Fixed,
    #[serde(alias = "noPrune")]
    #[value(name = "noprune")]
    Noprune,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::Fixed => "fixed",
            Mode::Noprune => "noprune",
        }
    }

    /// Controller parameters actually used in this mode.
    pub fn params(self, base: &ControllerParams) -> ControllerParams {
        match self {
            Mode::Adaptive => *base,
            Mode::Fixed => ControllerParams {
                entropy_mode: base.entropy_mode,
                tau: base.tau,
                ..ControllerParams::fixed(base.theta0)
            },
            Mode::Noprune => ControllerParams {
                entropy_mode: base.entropy_mode,
                tau: base.tau,
                ..ControllerParams::unpruned()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub localiser: LocaliserConfig,
    pub controller: ControllerParams,
    pub output_dir: PathBuf,
    pub emit_traffic: bool,
    pub mode: Mode,
    /// Traffic CSV to decode instead of simulating.
    pub replay_traffic: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self, broadcast: usize) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v; broadcast],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PositionSpec {
    Fixed(usize),
    Schedule(Vec<PositionChange>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    n: usize,
    #[serde(rename = "T")]
    frames: usize,
    benign_lambda: OneOrMany<f64>,
    attacker_lambda: OneOrMany<f64>,
    change_period: Option<usize>,
    attacker_position: Option<PositionSpec>,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLocaliser {
    p_stay: Option<f64>,
    attacker_lambda: Option<f64>,
    benign_lambda: Option<OneOrMany<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: Option<u32>,
    scenario: RawScenario,
    #[serde(default)]
    localiser: Option<RawLocaliser>,
    #[serde(default)]
    controller: ControllerParams,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    emit_traffic: bool,
    #[serde(default)]
    mode: Mode,
    replay_traffic: Option<PathBuf>,
}

/// Parses and validates a JSON run configuration.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::config(
            if key == "." { "<root>".into() } else { key },
            e.inner().to_string(),
        )
    })?;

    if let Some(v) = raw.version {
        if v != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported schema version {v}, expected {CONFIG_VERSION}"),
            ));
        }
    }

    let s = raw.scenario;
    let n = s.n;
    let scenario = Scenario {
        users: n,
        frames: s.frames,
        benign_lambda: s.benign_lambda.into_vec(n),
        attacker_lambda: s.attacker_lambda.into_vec(1),
        change_period: s.change_period.unwrap_or(DEFAULT_CHANGE_PERIOD),
        attacker_position: match s.attacker_position {
            None => vec![PositionChange { start: 0, user: 0 }],
            Some(PositionSpec::Fixed(user)) => vec![PositionChange { start: 0, user }],
            Some(PositionSpec::Schedule(v)) => v,
        },
        seed: s.seed,
    };
    scenario.validate()?;

    let l = raw.localiser.unwrap_or_default();
    let matching = LocaliserConfig::matching(&scenario, l.p_stay.unwrap_or(DEFAULT_P_STAY));
    let localiser = LocaliserConfig {
        attacker_lambda: l.attacker_lambda.unwrap_or(matching.attacker_lambda),
        benign_lambda: l
            .benign_lambda
            .map(|b| b.into_vec(n))
            .unwrap_or(matching.benign_lambda),
        p_stay: matching.p_stay,
    };
    localiser.validate(n)?;
    raw.controller.validate()?;

    Ok(RunConfig {
        scenario,
        localiser,
        controller: raw.controller,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        emit_traffic: raw.emit_traffic,
        mode: raw.mode,
        replay_traffic: raw.replay_traffic,
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trace_version: u32,
    pub mode: Mode,
    pub users: usize,
    pub frames: usize,
    pub seed: u64,
    pub frame_accuracy: f64,
    pub mean_support_size: f64,
    pub adaptations_up: usize,
    pub adaptations_down: usize,
    /// `null` in JSON when pruning is disabled (θ = +∞).
    #[serde(deserialize_with = "null_as_infinity")]
    pub theta0: f64,
    #[serde(deserialize_with = "null_as_infinity")]
    pub theta_final: f64,
    pub wall_time_ms: f64,
}

// JSON has no infinity; serde_json writes it as null.
fn null_as_infinity<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Decodes the configured scenario in the configured mode, without writing
/// anything.
pub fn execute(config: &RunConfig) -> Result<LocalisationResult> {
    let frames = match &config.replay_traffic {
        Some(path) => {
            let frames = read_traffic_csv(path)?;
            if frames.len() != config.scenario.frames {
                return Err(Error::config(
                    "replay_traffic",
                    format!(
                        "file has {} frames, scenario expects {}",
                        frames.len(),
                        config.scenario.frames
                    ),
                ));
            }
            frames
        }
        None => generate(&config.scenario)?,
    };
    localise_frames(
        &frames,
        &config.scenario.true_positions(),
        &config.localiser,
        &config.mode.params(&config.controller),
    )
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes `trace.csv` for a finished run.
pub fn write_trace_csv(path: &Path, result: &LocalisationResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(TRACE_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for (row, (&decoded, &truth)) in result
        .trace
        .rows
        .iter()
        .zip(result.decoded.iter().zip(&result.truth))
    {
        w.write_record([
            row.t.to_string(),
            row.theta.to_string(),
            row.epsilon.to_string(),
            row.nu.to_string(),
            row.support_size.to_string(),
            decoded.to_string(),
            truth.to_string(),
            fmt_bool(row.adapted).to_string(),
            row.direction.as_str().to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs one experiment and writes its files into `config.output_dir`.
pub fn run_experiment(config: &RunConfig) -> Result<Summary> {
    let started = Instant::now();
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    if config.emit_traffic {
        let frames = match &config.replay_traffic {
            Some(p) => read_traffic_csv(p)?,
            None => generate(&config.scenario)?,
        };
        write_traffic_csv(&dir.join("traffic.csv"), &frames)?;
    }

    let result = execute(config)?;
    write_trace_csv(&dir.join("trace.csv"), &result)?;

    let (up, down) = result.trace.adaptation_counts();
    let last = result.trace.rows.last();
    let params = config.mode.params(&config.controller);
    let theta_final = match (last, params.theta0.is_finite()) {
        (Some(r), true) => match r.direction {
            Direction::Up => {
                (r.theta * (1.0 + params.beta)).clamp(params.theta_min, params.theta_max)
            }
            Direction::Down => {
                (r.theta * (1.0 - params.beta)).clamp(params.theta_min, params.theta_max)
            }
            Direction::None => r.theta,
        },
        _ => params.theta0,
    };
    let summary = Summary {
        trace_version: TRACE_VERSION,
        mode: config.mode,
        users: config.scenario.users,
        frames: config.scenario.frames,
        seed: config.scenario.seed,
        frame_accuracy: result.frame_accuracy,
        mean_support_size: result.mean_support_size,
        adaptations_up: up,
        adaptations_down: down,
        theta0: params.theta0,
        theta_final,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    let path = dir.join("summary.json");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| Error::io(&path, e.into()))?;
    writeln!(f).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

/// One parsed `trace.csv` row.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub theta: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub survivors: usize,
    pub decoded_state: usize,
    pub true_state: usize,
    pub adapted: u8,
    pub direction: Direction,
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header, expected {}", TRACE_HEADER.join(",")),
        });
    }
    r.deserialize()
        .map(|rec| rec.map_err(|e| csv_error(path, e)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub frames: usize,
    /// Fraction of frames with the same decoded state.
    pub agreement: f64,
    pub mean_survivors_a: f64,
    pub mean_survivors_b: f64,
    pub theta_a: ThetaStats,
    pub theta_b: ThetaStats,
}

fn theta_stats(rows: &[TraceRecord]) -> ThetaStats {
    let thetas = || rows.iter().map(|r| r.theta);
    ThetaStats {
        min: thetas().fold(f64::INFINITY, f64::min),
        max: thetas().fold(f64::NEG_INFINITY, f64::max),
        mean: thetas().sum::<f64>() / rows.len() as f64,
        last: rows.last().map_or(f64::NAN, |r| r.theta),
    }
}

pub fn compare_traces(a: &[TraceRecord], b: &[TraceRecord]) -> Result<CompareReport> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "trace length",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Domain("cannot compare empty traces".into()));
    }
    let same = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.decoded_state == y.decoded_state)
        .count();
    let mean_survivors = |rows: &[TraceRecord]| {
        rows.iter().map(|r| r.survivors as f64).sum::<f64>() / rows.len() as f64
    };
    Ok(CompareReport {
        frames: a.len(),
        agreement: same as f64 / a.len() as f64,
        mean_survivors_a: mean_survivors(a),
        mean_survivors_b: mean_survivors(b),
        theta_a: theta_stats(a),
        theta_b: theta_stats(b),
    })
}

pub fn compare_runs(trace_a: &Path, trace_b: &Path) -> Result<CompareReport> {
    compare_traces(&read_trace_csv(trace_a)?, &read_trace_csv(trace_b)?)
}

/// Runs the same configuration once per seed, `jobs` at a time, each into
/// `<output_dir>/seed-<seed>`. Results come back in seed order.
pub fn sweep(config: &RunConfig, seeds: &[u64], jobs: usize) -> Result<Vec<Summary>> {
    let configs: Vec<RunConfig> = seeds
        .iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.scenario.seed = seed;
            c.output_dir = config.output_dir.join(format!("seed-{seed}"));
            c
        })
        .collect();
    let jobs = jobs.max(1);
    let mut results: Vec<Option<Result<Summary>>> = (0..configs.len()).map(|_| None).collect();
    for (chunk_cfgs, chunk_out) in configs.chunks(jobs).zip(results.chunks_mut(jobs)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk_cfgs
                .iter()
                .map(|c| scope.spawn(move || run_experiment(c)))
                .collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Domain("sweep worker panicked".into()))),
                );
            }
        });
    }
    results
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"scenario": {"n": 3, "T": 50, "benign_lambda": 10, "attacker_lambda": 3}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.scenario.users, 3);
        assert_eq!(c.scenario.benign_lambda, vec![10.0; 3]);
        assert_eq!(c.scenario.change_period, 1000);
        assert_eq!(
            c.scenario.attacker_position,
            vec![PositionChange { start: 0, user: 0 }]
        );
        assert_eq!(c.controller, ControllerParams::default());
        assert_eq!(c.controller.alpha, 0.25);
        assert_eq!(c.controller.beta, 0.0005);
        assert_eq!(c.controller.theta0, 2.5);
        assert_eq!(c.localiser.p_stay, DEFAULT_P_STAY);
        assert_eq!(c.localiser.attacker_lambda, 3.0);
        assert_eq!(c.mode, Mode::Adaptive);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    fn key_of(text: &str) -> String {
        match parse_config_str(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(
            key_of(
                r#"{"scenario": {"n": 3, "T": 50, "benign_lambda": 10, "attacker_lambda": 3},
                      "controller": {"theta0": 0.5}}"#
            ),
            "controller.theta0"
        );
        assert_eq!(
            key_of(
                r#"{"scenario": {"n": "three", "T": 50, "benign_lambda": 10, "attacker_lambda": 3}}"#
            ),
            "scenario.n"
        );
        assert!(
            key_of(r#"{"scenario": {"n": 3, "benign_lambda": 10, "attacker_lambda": 3}}"#)
                .starts_with("scenario")
        );
        assert_eq!(
            key_of(r#"{"scenario": {"n": 3, "T": 0, "benign_lambda": 10, "attacker_lambda": 3}}"#),
            "scenario.T"
        );
        assert_eq!(
            key_of(
                r#"{"scenario": {"n": 3, "T": 50, "benign_lambda": 10, "attacker_lambda": 3},
                      "controller": {"gamma": 1}}"#
            ),
            "controller.gamma"
        );
    }

    #[test]
    fn mode_aliases() {
        for (name, mode) in [
            ("adaptive", Mode::Adaptive),
            ("fixed", Mode::Fixed),
            ("fixedTheta", Mode::Fixed),
            ("noprune", Mode::Noprune),
            ("noPrune", Mode::Noprune),
        ] {
            let text = MINIMAL.replace("}}", &format!("}}, \"mode\": \"{name}\"}}"));
            assert_eq!(parse_config_str(&text).unwrap().mode, mode);
        }
    }

    #[test]
    fn compare_rejects_length_mismatch() {
        let row = |t| TraceRecord {
            t,
            theta: 2.5,
            epsilon: 0.0,
            nu: -1.0,
            survivors: 1,
            decoded_state: 0,
            true_state: 0,
            adapted: 0,
            direction: Direction::None,
        };
        let a = vec![row(0), row(1)];
        assert_eq!(compare_traces(&a, &a).unwrap().agreement, 1.0);
        assert!(compare_traces(&a, &a[..1]).is_err());
    }
}
