use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adaptive_prune::experiment::{self, Mode, RunConfig};
use adaptive_prune::Error;

/// Adaptive-pruning Viterbi localisation of a spoofing attacker.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `scenario.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Also write the simulated request counts to `traffic.csv`.
    #[arg(long)]
    emit_traffic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv / summary.json.
    Run(RunArgs),
    /// Compare two trace.csv files.
    Compare { trace_a: PathBuf, trace_b: PathBuf },
    /// Run a configuration over several seeds in parallel.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
}

fn load(args: &RunArgs) -> Result<RunConfig, Error> {
    let mut config = experiment::parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.scenario.seed = seed;
    }
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    config.emit_traffic |= args.emit_traffic;
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let config = load(&args)?;
            let summary = experiment::run_experiment(&config)?;
            println!(
                "{}: accuracy {:.4}, mean survivors {:.3}, adaptations up {} / down {}, theta {} -> {}",
                config.output_dir.display(),
                summary.frame_accuracy,
                summary.mean_support_size,
                summary.adaptations_up,
                summary.adaptations_down,
                summary.theta0,
                summary.theta_final,
            );
        }
        Command::Compare { trace_a, trace_b } => {
            let report = experiment::compare_runs(&trace_a, &trace_b)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serialises")
            );
        }
        Command::Sweep { run, seeds, jobs } => {
            let config = load(&run)?;
            let summaries = experiment::sweep(&config, &seeds, jobs)?;
            println!("seed,frame_accuracy,mean_support_size,adaptations_up,adaptations_down");
            for s in &summaries {
                println!(
                    "{},{},{},{},{}",
                    s.seed,
                    s.frame_accuracy,
                    s.mean_support_size,
                    s.adaptations_up,
                    s.adaptations_down
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
