use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use noma_mec::harness::{emit_results, run_sweep};
use noma_mec::{Arm, ExperimentConfig, SimError};

/// Monte Carlo sweep of NOMA-assisted multi-MEC offloading strategies.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,

    /// Output directory for the CSV files.
    #[arg(long)]
    out: PathBuf,

    /// Comma-separated arm ids, e.g. game-deadline,dist-deadline,dist-channel.
    #[arg(long)]
    arms: Option<String>,

    /// Runs per sweep point.
    #[arg(long)]
    runs: Option<usize>,

    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,

    /// Device counts as start:end:step (inclusive) or a comma-separated list.
    #[arg(long = "n-sweep")]
    n_sweep: Option<String>,
}

fn parse_sweep(spec: &str) -> Result<Vec<usize>, SimError> {
    let bad = || SimError::Config(format!("--n-sweep {spec:?}: expected start:end:step or a,b,c"));
    let nums = |sep: char| -> Result<Vec<usize>, SimError> {
        spec.split(sep).map(|s| s.trim().parse().map_err(|_| bad())).collect()
    };
    if spec.contains(':') {
        match nums(':')?.as_slice() {
            &[start, end, step] if step > 0 && start <= end => Ok((start..=end).step_by(step).collect()),
            _ => Err(bad()),
        }
    } else {
        nums(',')
    }
}

fn run(args: Args) -> Result<(), SimError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| SimError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut cfg = ExperimentConfig::from_json_str(&text)?;
    if let Some(arms) = &args.arms {
        cfg.arms = arms.split(',').map(str::parse::<Arm>).collect::<Result<_, _>>()?;
    }
    if let Some(runs) = args.runs {
        cfg.runs_per_point = runs;
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(spec) = &args.n_sweep {
        cfg.n_devices_sweep = parse_sweep(spec)?;
    }
    cfg.validate()?;
    let table = run_sweep(&cfg)?;
    for path in emit_results(&table, &args.out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simulate: {e}");
            ExitCode::FAILURE
        }
    }
}
