//! Experiment plumbing: run a config end to end, prune or inspect a saved
//! checkpoint, and tabulate schedules. Every function writes plain files
//! (CSV, JSON, SVG, text) into a directory and returns what it computed.

mod checkpoint;
mod config;
mod plot;

pub use checkpoint::{Checkpoint, PlanEcho, FORMAT_VERSION};
pub use config::{ExperimentConfig, ModelSection, SparsifySection, SparsityTarget, TrainSection};
pub use plot::{LineChart, Series};

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::granularity::{enumerate_blocks, GranularityName, GranularitySpec};
use crate::harness::{fit, make_dataset, Callback, EpochSummary, MetricLog, MetricRow, Model};
use crate::rng::{streams, Rng};
use crate::schedule::{eval_schedule, ScheduleKind};
use crate::selection::Context;
use crate::sparsifier::{RoundRecord, Sparsifier, SparsifyCallback};
use crate::tensor::Mask;

/// Environment variable that overrides every configured output directory.
pub const OUTPUT_ROOT_ENV: &str = "PRUNEKIT_OUTPUT_ROOT";

/// Output root: the environment override, else `configured`, else `runs`.
pub fn output_root(configured: Option<&Path>) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("runs")),
    }
}

/// `<root>/<name>-seed<seed>`.
pub fn run_dir(config: &ExperimentConfig) -> PathBuf {
    output_root(config.output_dir.as_deref()).join(format!("{}-seed{}", config.name, config.seed))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub log: MetricLog,
    pub rounds: Vec<RoundRecord>,
    pub checkpoint: Checkpoint,
    pub ticket_paths: Vec<PathBuf>,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct RoundRow {
    round: usize,
    epoch: usize,
    step: usize,
    sparsity: f64,
    model_sparsity: f64,
    accuracy: Option<f64>,
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn write_epochs_csv(path: &Path, rows: &[EpochSummary]) -> Result<()> {
    write_csv(path, rows)
}

pub fn write_rounds_csv(path: &Path, rounds: &[RoundRecord]) -> Result<()> {
    let rows: Vec<RoundRow> = rounds
        .iter()
        .map(|r| RoundRow {
            round: r.round,
            epoch: r.epoch,
            step: r.step,
            sparsity: r.target_sparsity,
            model_sparsity: r.model_sparsity,
            accuracy: r.accuracy,
        })
        .collect();
    if rows.is_empty() {
        // csv writes no header for an empty serialize stream
        return write_text(path, "round,epoch,step,sparsity,model_sparsity,accuracy\n");
    }
    write_csv(path, &rows)
}

/// Trains the configured experiment into [`run_dir`].
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    execute(config, &run_dir(config), false)
}

/// Same as [`run_experiment`] with an explicit output directory.
pub fn run_experiment_in(config: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    execute(config, dir, false)
}

/// Lottery ticket run: requires `sparsify.lth` and always saves tickets.
pub fn run_lth_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    execute(config, &run_dir(config), true)
}

pub fn run_lth_experiment_in(config: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    execute(config, dir, true)
}

fn execute(config: &ExperimentConfig, dir: &Path, lth: bool) -> Result<RunOutcome> {
    config.validate()?;
    let mut plan = config.plan()?;
    if lth {
        match plan.as_mut() {
            Some(p) if p.lth => p.save_tickets = true,
            Some(_) => {
                return Err(Error::config(
                    "sparsify.lth",
                    "must be true for a lottery ticket run",
                ))
            }
            None => {
                return Err(Error::config(
                    "sparsify",
                    "a lottery ticket run needs a [sparsify] section",
                ))
            }
        }
    }

    let dataset = make_dataset(&config.dataset, &mut Rng::with_stream(config.seed, streams::DATA))?;
    let (train, valid) = dataset.split()?;
    let mut model = config.build_model()?;
    let train_config = config.train_config();
    create_dir(dir)?;

    let mut sparsify = plan
        .clone()
        .map(|p| SparsifyCallback::new(p, Rng::with_stream(config.seed, streams::CRITERIA)));
    let fitted = {
        let mut callbacks: Vec<&mut dyn Callback> = Vec::new();
        if let Some(cb) = sparsify.as_mut() {
            callbacks.push(cb);
        }
        fit(&mut model, &train_config, &train, &valid, &mut callbacks)
    };
    let log = match fitted {
        Ok(log) => log,
        Err(e) => {
            // keep whatever state training reached
            let mut ck = Checkpoint::new(model);
            ck.plan = plan.as_ref().map(PlanEcho::from_plan);
            ck.save(&dir.join("aborted.json"))?;
            return Err(e);
        }
    };

    let (state, rounds, tickets) = match sparsify {
        Some(cb) => {
            let (s, r, t) = cb.into_parts();
            (Some(s), r, t)
        }
        None => (None, Vec::new(), Vec::new()),
    };
    let echo = plan.as_ref().map(PlanEcho::from_plan);
    let mut checkpoint = Checkpoint::new(model);
    checkpoint.plan = echo.clone();
    checkpoint.metrics_tail = log.epochs.clone();
    if let Some(s) = state {
        checkpoint.histories = Some(s.histories);
        checkpoint.rewind_snapshot = s.rewind_snapshot;
    }

    write_metrics_csv(&dir.join("metrics.csv"), &log.steps)?;
    write_epochs_csv(&dir.join("epochs.csv"), &log.epochs)?;
    checkpoint.save(&dir.join("checkpoint.json"))?;
    let mut ticket_paths = Vec::new();
    if plan.is_some() {
        write_rounds_csv(&dir.join("rounds.csv"), &rounds)?;
        let steps: Vec<(f64, f64)> = log
            .steps
            .iter()
            .map(|r| (r.step as f64, r.model_sparsity))
            .collect();
        let targets: Vec<(f64, f64)> = log
            .steps
            .iter()
            .map(|r| (r.step as f64, r.target_sparsity))
            .collect();
        let mut chart = LineChart::new(&format!("{}: sparsity", config.name), "step", "sparsity (%)")
            .with_series("model", steps)
            .with_series("target", targets);
        chart.y_range = Some((0.0, 100.0));
        write_text(&dir.join("sparsity.svg"), &chart.render())?;
    }
    if !tickets.is_empty() {
        let tdir = dir.join("tickets");
        create_dir(&tdir)?;
        for t in &tickets {
            let mut ck = Checkpoint::new(t.model.clone());
            ck.rewind_snapshot = Some(t.rewind_snapshot.clone());
            ck.plan = echo.clone();
            let path = tdir.join(format!("ticket-{:02}.json", t.round));
            ck.save(&path)?;
            ticket_paths.push(path);
        }
    }
    write_text(
        &dir.join("summary.txt"),
        &summary(config, &log, &rounds, &checkpoint.model)?,
    )?;

    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        log,
        rounds,
        checkpoint,
        ticket_paths,
    })
}

fn summary(
    config: &ExperimentConfig,
    log: &MetricLog,
    rounds: &[RoundRecord],
    model: &Model,
) -> Result<String> {
    use std::fmt::Write as _;
    let mut s = String::new();
    let specs: Vec<String> = model.specs().iter().map(ToString::to_string).collect();
    let _ = writeln!(s, "experiment: {}", config.name);
    let _ = writeln!(s, "seed: {}", config.seed);
    let _ = writeln!(s, "dataset: {:?}", config.dataset);
    let _ = writeln!(s, "model: {}", specs.join(" "));
    let _ = writeln!(
        s,
        "training: {} epochs, batch {}, lr {}, momentum {}",
        config.train.epochs, config.train.batch_size, config.train.learning_rate, config.train.momentum
    );
    match &config.sparsify {
        Some(sp) => {
            let _ = writeln!(
                s,
                "pruning: {} schedule, granularity {}, context {}, criterion {}{}",
                sp.schedule,
                sp.granularity,
                sp.context,
                sp.criterion,
                if sp.lth { ", lottery ticket" } else { "" }
            );
            let _ = writeln!(s, "pruning rounds: {}", rounds.len());
        }
        None => {
            let _ = writeln!(s, "pruning: none");
        }
    }
    if let Some(last) = log.epochs.last() {
        let _ = writeln!(s, "final train loss: {:.6}", last.train_loss);
        let _ = writeln!(s, "final train accuracy: {:.4}", last.train_acc);
        let _ = writeln!(s, "final valid accuracy: {:.4}", last.valid_acc);
    }
    let _ = writeln!(s, "model sparsity: {:.2}%", model.sparsity() * 100.0);
    for r in layer_reports(model, None)? {
        let _ = writeln!(s, "  {r}");
    }
    Ok(s)
}

/// Per-layer mask statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    /// Position among prunable layers.
    pub index: usize,
    pub kind: String,
    pub shape: Vec<usize>,
    pub pruned: usize,
    pub total: usize,
    /// Blocks fully pruned and total blocks, under the granularity asked for.
    pub blocks: Option<(usize, usize)>,
    /// Named granularities under which the mask is block-pure.
    pub pure_under: Vec<&'static str>,
}

impl LayerReport {
    /// Percent.
    pub fn sparsity(&self) -> f64 {
        100.0 * self.pruned as f64 / self.total as f64
    }
}

impl fmt::Display for LayerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} {:?}: {:.2}% ({}/{})",
            self.index,
            self.kind,
            self.shape,
            self.sparsity(),
            self.pruned,
            self.total
        )?;
        if let Some((p, n)) = self.blocks {
            write!(f, ", blocks {p}/{n}")?;
        }
        if !self.pure_under.is_empty() {
            write!(f, ", block-pure: {}", self.pure_under.join(" "))?;
        }
        Ok(())
    }
}

/// Whether every block of `spec` is entirely kept or entirely pruned.
pub fn is_block_pure(mask: &Mask, spec: &GranularitySpec) -> Result<bool> {
    let partition = enumerate_blocks(spec, mask.shape())?;
    Ok(partition
        .blocks()
        .iter()
        .all(|b| b.iter().all(|&i| mask.bits()[i] == mask.bits()[b[0]])))
}

fn pruned_blocks(mask: &Mask, spec: &GranularitySpec) -> Result<(usize, usize)> {
    let partition = enumerate_blocks(spec, mask.shape())?;
    let pruned = partition
        .blocks()
        .iter()
        .filter(|b| b.iter().all(|&i| mask.bits()[i] == 0))
        .count();
    Ok((pruned, partition.len()))
}

pub fn layer_reports(model: &Model, granularity: Option<&GranularityName>) -> Result<Vec<LayerReport>> {
    let masks = model.masks();
    model
        .params()
        .zip(&masks)
        .enumerate()
        .map(|(index, (p, mask))| {
            let rank = p.weight.rank();
            let mut pure_under = Vec::new();
            for spec in GranularitySpec::all(rank)? {
                if let Some(alias) = spec.alias() {
                    if is_block_pure(mask, &spec)? {
                        pure_under.push(alias);
                    }
                }
            }
            let blocks = match granularity {
                Some(g) => Some(pruned_blocks(mask, &g.resolve(rank)?)?),
                None => None,
            };
            let kind = model
                .layers()
                .iter()
                .filter(|l| l.is_prunable())
                .nth(index)
                .map(|l| l.spec().to_string())
                .unwrap_or_default();
            Ok(LayerReport {
                index,
                kind,
                shape: p.weight.shape().to_vec(),
                pruned: mask.zeros_count(),
                total: mask.len(),
                blocks,
                pure_under,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PruneRequest {
    pub sparsity: f64,
    pub granularity: String,
    pub context: String,
    pub criterion: String,
    /// Seeds the `random` criterion.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub checkpoint: Checkpoint,
    pub layers: Vec<LayerReport>,
}

impl PruneOutcome {
    /// Percent of all prunable weights.
    pub fn global_sparsity(&self) -> f64 {
        self.checkpoint.model.sparsity() * 100.0
    }

    pub fn report(&self) -> String {
        let mut s: String = self.layers.iter().map(|l| format!("{l}\n")).collect();
        s.push_str(&format!("global sparsity: {:.2}%\n", self.global_sparsity()));
        s
    }
}

/// Applies a static prune to a saved checkpoint and writes the result to `output`.
pub fn prune_checkpoint(input: &Path, request: &PruneRequest, output: &Path) -> Result<PruneOutcome> {
    let criterion: Criterion = request.criterion.parse()?;
    let context = Context::parse(&request.context)?;
    if !(0.0..=100.0).contains(&request.sparsity) {
        return Err(Error::invalid(format!(
            "sparsity {} is outside [0, 100]",
            request.sparsity
        )));
    }
    let mut checkpoint = Checkpoint::load(input)?;
    let sparsifier = Sparsifier::new(request.granularity.as_str(), context, criterion);
    sparsifier.check_model(&checkpoint.model)?;
    if criterion.needs_history() && checkpoint.histories.is_none() {
        return Err(Error::invalid(format!(
            "criterion '{criterion}' needs weight history, but {} has none",
            input.display()
        )));
    }
    let mut rng = Rng::with_stream(request.seed, streams::CRITERIA);
    sparsifier.prune_model(
        &mut checkpoint.model,
        request.sparsity,
        checkpoint.histories.as_deref(),
        &mut rng,
    )?;
    checkpoint.plan = Some(PlanEcho::from_sparsifier(&sparsifier, "static", request.sparsity));
    checkpoint.save(output)?;
    let layers = layer_reports(&checkpoint.model, Some(&sparsifier.granularity))?;
    Ok(PruneOutcome { checkpoint, layers })
}

#[derive(Debug, Clone)]
pub struct InspectReport {
    pub layers: Vec<LayerReport>,
    /// Percent.
    pub global_sparsity: f64,
    /// Granularity recorded in the checkpoint's plan, if any.
    pub granularity: Option<String>,
}

impl fmt::Display for InspectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.layers {
            writeln!(f, "{l}")?;
        }
        if let Some(g) = &self.granularity {
            writeln!(f, "recorded granularity: {g} (all masks block-pure)")?;
        }
        writeln!(f, "global sparsity: {:.2}%", self.global_sparsity)
    }
}

/// Loads a checkpoint and checks its masks. A mask that is not block-pure
/// under the checkpoint's recorded granularity is an integrity failure.
pub fn inspect_checkpoint(path: &Path) -> Result<InspectReport> {
    let checkpoint = Checkpoint::load(path)?;
    let granularity = checkpoint
        .plan
        .as_ref()
        .map(|p| GranularityName(p.granularity.clone()));
    let layers = layer_reports(&checkpoint.model, granularity.as_ref())?;
    if let Some(g) = &granularity {
        for (l, p) in layers.iter().zip(checkpoint.model.params()) {
            let spec = g.resolve(p.weight.rank())?;
            let pure = spec.alias().is_none_or(|a| l.pure_under.contains(&a));
            if !pure {
                return Err(Error::Corrupt {
                    path: path.to_path_buf(),
                    message: format!(
                        "layer {} mask is not block-pure under granularity '{}'",
                        l.index, g.0
                    ),
                });
            }
        }
    }
    Ok(InspectReport {
        global_sparsity: checkpoint.model.sparsity() * 100.0,
        layers,
        granularity: granularity.map(|g| g.0),
    })
}

/// `(t, sparsity)` at `samples` evenly spaced points of `[0, 1]`.
pub fn schedule_table(kind: &ScheduleKind, sparsity: f64, samples: usize) -> Result<Vec<(f64, f64)>> {
    if samples < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    if !(0.0..=100.0).contains(&sparsity) {
        return Err(Error::invalid(format!("sparsity {sparsity} is outside [0, 100]")));
    }
    Ok((0..samples)
        .map(|i| {
            let t = i as f64 / (samples - 1) as f64;
            (t, eval_schedule(kind, sparsity, t))
        })
        .collect())
}

/// Writes `schedule.csv` and `schedule.svg` into `dir`; returns their paths.
pub fn write_schedule(
    dir: &Path,
    kind: &ScheduleKind,
    sparsity: f64,
    samples: usize,
) -> Result<(PathBuf, PathBuf)> {
    let table = schedule_table(kind, sparsity, samples)?;
    create_dir(dir)?;
    let csv_path = dir.join("schedule.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["t", "sparsity"])?;
    for (t, s) in &table {
        w.serialize((t, s))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let mut chart = LineChart::new(&format!("{} schedule", kind.name()), "t", "sparsity (%)")
        .with_series(kind.name(), table);
    chart.y_range = Some((0.0, sparsity.max(1e-9)));
    let svg_path = dir.join("schedule.svg");
    write_text(&svg_path, &chart.render())?;
    Ok((csv_path, svg_path))
}
