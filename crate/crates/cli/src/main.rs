//! Command-line batch runner: pick a registry experiment (or a config file),
//! execute its independent seeded runs, and emit the per-interaction CSV,
//! summary CSV and run manifest.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;

use trustbed_core::population::ConsumerGroup;
use trustbed_core::{experiment, ExperimentConfig, RunOptions};

/// Environment variable consulted for the output directory when `--out` is
/// not given.
const OUT_ENV: &str = "TRUSTBED_OUT";

#[derive(Parser, Debug)]
#[command(name = "trustbed", version, about = "Deterministic trust-model testbed experiment runner")]
struct Args {
    /// Registry experiment id (1-11)
    #[arg(long)]
    experiment: Option<u32>,

    /// Flat key=value config file; overrides the registry entry
    #[arg(long)]
    config: Option<PathBuf>,

    /// Base seed; run i uses seed base_seed + i
    #[arg(long)]
    seed: Option<u64>,

    /// Number of independent runs (NISR)
    #[arg(long)]
    runs: Option<u32>,

    /// Rounds per run
    #[arg(long)]
    rounds: Option<u64>,

    /// Output directory (default: $TRUSTBED_OUT, then ./out)
    #[arg(long)]
    out: Option<PathBuf>,

    /// List the experiment registry and exit
    #[arg(long)]
    list: bool,

    /// Worker threads for parallel runs (0 = all cores)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> anyhow::Result<()> {
    if args.list {
        print_registry();
        return Ok(());
    }

    let mut cfg = resolve_config(&args)?;
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(runs) = args.runs {
        cfg.nisr = runs;
    }
    if let Some(rounds) = args.rounds {
        cfg.sim.rounds = rounds;
    }

    let out_dir = args
        .out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut opts = RunOptions::new(out_dir);
    opts.jobs = args.jobs;

    eprintln!(
        "experiment {}: {} runs x {} rounds, base seed {} ({})",
        cfg.id,
        cfg.nisr,
        cfg.sim.rounds,
        cfg.base_seed,
        cfg.dynamics_summary()
    );
    let output = experiment::run_experiment(&cfg, &opts).context("experiment failed")?;

    for path in [&output.interactions_csv, &output.summary_csv, &output.manifest_path] {
        println!("wrote {}", path.display());
    }
    let n_max = output.series.iter().map(|p| p.interaction_index).max().unwrap_or(0);
    print!("overall mean UG ");
    for group in ConsumerGroup::ALL {
        match output.window_mean(group, 1, n_max.max(1)) {
            Some(m) => print!(" {}={m:.3}", group.key()),
            None => print!(" {}=n/a", group.key()),
        }
    }
    println!();
    Ok(())
}

fn resolve_config(args: &Args) -> anyhow::Result<ExperimentConfig> {
    match (&args.experiment, &args.config) {
        (Some(id), None) => Ok(experiment::experiment_config(*id)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(ExperimentConfig::from_flat(&text)?)
        }
        (Some(id), Some(path)) => {
            let mut cfg = experiment::experiment_config(*id)?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            // The registry id wins; the file supplies overrides only.
            let filtered: String = text
                .lines()
                .filter(|l| l.trim_start().strip_prefix("id").map_or(true, |rest| !rest.trim_start().starts_with('=')))
                .collect::<Vec<_>>()
                .join("\n");
            cfg.apply_flat(&filtered)?;
            Ok(cfg)
        }
        (None, None) => bail!("nothing to do: pass --experiment <1-11>, --config <file>, or --list"),
    }
}

fn print_registry() {
    println!("{:>2}  {:>6}  {:>4}  dynamics", "id", "rounds", "nisr");
    for cfg in experiment::list_experiments() {
        println!(
            "{:>2}  {:>6}  {:>4}  {}",
            cfg.id,
            cfg.sim.rounds,
            cfg.nisr,
            cfg.dynamics_summary()
        );
    }
}
