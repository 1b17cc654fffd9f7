use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adaptive_prune::experiment::{self, Summary};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adaptive-prune"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_config(dir: &Path, frames: i64) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        format!(
            r#"{{
  "scenario": {{"n": 4, "T": {frames}, "benign_lambda": 5, "attacker_lambda": [20, 12],
                "change_period": 150, "attacker_position": 2, "seed": 3}},
  "localiser": {{"p_stay": 0.95}},
  "controller": {{"tau": 20}}
}}"#
        ),
    )
    .unwrap();
    path
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_trace_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), 300);
    let out = tmp.path().join("out");
    let o = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let trace = experiment::read_trace_csv(&out.join("trace.csv")).unwrap();
    assert_eq!(trace.len(), 300);
    let header = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "t,theta,epsilon,nu,survivors,decoded_state,true_state,adapted,direction"
    );

    let s = summary(&out);
    assert_eq!(s.frames, 300);
    assert_eq!(s.users, 4);
    let adapted = trace.iter().filter(|r| r.adapted == 1).count();
    assert_eq!(s.adaptations_up + s.adaptations_down, adapted);
    let expected_final = s.theta0
        * (1.0 + 0.0005f64).powi(s.adaptations_up as i32)
        * (1.0 - 0.0005f64).powi(s.adaptations_down as i32);
    assert!((s.theta_final - expected_final).abs() <= 1e-9 * expected_final);
}

#[test]
fn identical_runs_produce_identical_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), 300);
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        traces.push(fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn seed_override_changes_the_traffic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), 100);
    let mut traffic = Vec::new();
    for seed in ["1", "2"] {
        let out = tmp.path().join(seed);
        let o = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--emit-traffic",
        ]);
        assert!(o.status.success());
        traffic.push(fs::read(out.join("traffic.csv")).unwrap());
        assert_eq!(summary(&out).seed, seed.parse::<u64>().unwrap());
    }
    assert_ne!(traffic[0], traffic[1]);
}

#[test]
fn replayed_traffic_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), 200);
    let first = tmp.path().join("first");
    let o = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        first.to_str().unwrap(),
        "--emit-traffic",
    ]);
    assert!(o.status.success());

    let mut replay = experiment::parse_config(&config).unwrap();
    replay.replay_traffic = Some(first.join("traffic.csv"));
    replay.output_dir = tmp.path().join("replay");
    replay.scenario.seed = 999; // ignored when replaying
    experiment::run_experiment(&replay).unwrap();
    assert_eq!(
        fs::read(first.join("trace.csv")).unwrap(),
        fs::read(replay.output_dir.join("trace.csv")).unwrap()
    );
}

#[test]
fn zero_frames_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), 0);
    let o = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario.T"));
}

#[test]
fn unknown_key_and_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"scenario": {"n": 2, "T": 10, "benign_lambda": 5, "attacker_lambda": 20},
           "controller": {"gamma": 1}}"#,
    )
    .unwrap();
    let o = run(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("controller.gamma"));

    let o = run(&[
        "run",
        "--config",
        tmp.path().join("absent.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_adaptive_against_unpruned() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), 300);
    for mode in ["adaptive", "noprune"] {
        let out = tmp.path().join(mode);
        let o = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(summary(&tmp.path().join("noprune")).theta0.is_infinite());

    let a = tmp.path().join("adaptive/trace.csv");
    let b = tmp.path().join("noprune/trace.csv");
    let o = run(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["frames"], 300);
    assert!(report["agreement"].as_f64().unwrap() >= 0.99);
    assert_eq!(report["mean_survivors_b"].as_f64().unwrap(), 4.0);
}

#[test]
fn compare_rejects_mismatched_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    for frames in [50, 60] {
        let config = small_config(tmp.path(), frames);
        let out = tmp.path().join(frames.to_string());
        assert!(run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap()
        ])
        .status
        .success());
    }
    let o = run(&[
        "compare",
        tmp.path().join("50/trace.csv").to_str().unwrap(),
        tmp.path().join("60/trace.csv").to_str().unwrap(),
    ]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn sweep_runs_each_seed_into_its_own_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), 120);
    let out = tmp.path().join("sweep");
    let o = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
        "--seeds",
        "4,5,6",
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 4);
    for seed in [4u64, 5, 6] {
        let dir = out.join(format!("seed-{seed}"));
        assert_eq!(summary(&dir).seed, seed);
        assert_eq!(
            experiment::read_trace_csv(&dir.join("trace.csv"))
                .unwrap()
                .len(),
            120
        );
    }
}

#[test]
fn shipped_fig4_config_values() {
    let c = experiment::parse_config(&configs().join("fig4.json")).unwrap();
    assert_eq!(c.scenario.frames, 5000);
    assert_eq!(c.scenario.change_period, 1000);
    assert_eq!(c.controller.alpha, 0.25);
    assert_eq!(c.controller.beta, 0.0005);
    assert_eq!(c.controller.theta0, 2.5);
    for name in ["users2.json", "users8.json"] {
        experiment::parse_config(&configs().join(name)).unwrap();
    }
}
