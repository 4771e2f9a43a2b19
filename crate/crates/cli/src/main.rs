use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use prunekit::experiment::{
    inspect_checkpoint, output_root, prune_checkpoint, run_experiment, run_lth_experiment, write_schedule,
    ExperimentConfig, PruneRequest, RunOutcome,
};
use prunekit::schedule::{ScheduleKind, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_N_STEPS};
use prunekit::Result;

/// Train, prune and inspect small networks with configurable sparsification.
///
/// Outputs go under $PRUNEKIT_OUTPUT_ROOT when set.
#[derive(Parser)]
#[command(name = "prunekit", version)]
struct Cli {
    /// Overrides the seed of a config, or seeds the random criterion for `prune`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an experiment described by a TOML config.
    Run { config: PathBuf },
    /// Tabulate and plot a sparsity schedule over t in [0, 1].
    Schedule {
        kind: String,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        #[arg(long, default_value_t = 100.0)]
        sparsity: f64,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        #[arg(long = "n-steps", default_value_t = DEFAULT_N_STEPS)]
        n_steps: usize,
        /// Directory for schedule.csv and schedule.svg.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Statically prune a checkpoint.
    Prune {
        checkpoint: PathBuf,
        #[arg(long)]
        sparsity: f64,
        #[arg(long)]
        granularity: String,
        #[arg(long, default_value = "local")]
        context: String,
        #[arg(long)]
        criterion: String,
        /// Defaults to `<checkpoint>-pruned.json` beside the input.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Lottery ticket run; writes one ticket per pruning round.
    Lth { config: PathBuf },
    /// Report per-layer sparsity and mask structure of a checkpoint.
    Inspect { checkpoint: PathBuf },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
        config.validate()?;
    }
    Ok(config)
}

fn print_run(outcome: &RunOutcome) {
    if let Some(last) = outcome.log.epochs.last() {
        println!(
            "epoch {}: valid acc {:.4}, model sparsity {:.2}%",
            last.epoch, last.valid_acc, last.model_sparsity
        );
    }
    for r in &outcome.rounds {
        println!(
            "round {}: target {:.2}%, accuracy {}",
            r.round,
            r.target_sparsity,
            r.accuracy.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
    }
    for t in &outcome.ticket_paths {
        println!("ticket: {}", t.display());
    }
    println!("outputs: {}", outcome.dir.display());
}

fn pruned_path(input: &Path) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    input.with_file_name(format!("{stem}-pruned.json"))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let config = load_config(&config, cli.seed)?;
            print_run(&run_experiment(&config)?);
        }
        Command::Lth { config } => {
            let config = load_config(&config, cli.seed)?;
            print_run(&run_lth_experiment(&config)?);
        }
        Command::Schedule {
            kind,
            samples,
            sparsity,
            alpha,
            beta,
            n_steps,
            output,
        } => {
            let parsed = ScheduleKind::parse(&kind, n_steps, alpha, beta)?;
            let dir = output.unwrap_or_else(|| output_root(None).join(format!("schedule-{kind}")));
            let (csv, svg) = write_schedule(&dir, &parsed, sparsity, samples)?;
            println!("{}", csv.display());
            println!("{}", svg.display());
        }
        Command::Prune {
            checkpoint,
            sparsity,
            granularity,
            context,
            criterion,
            output,
        } => {
            let output = output.unwrap_or_else(|| pruned_path(&checkpoint));
            let request = PruneRequest {
                sparsity,
                granularity,
                context,
                criterion,
                seed: cli.seed.unwrap_or(0),
            };
            let outcome = prune_checkpoint(&checkpoint, &request, &output)?;
            print!("{}", outcome.report());
            println!("written: {}", output.display());
        }
        Command::Inspect { checkpoint } => {
            print!("{}", inspect_checkpoint(&checkpoint)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
