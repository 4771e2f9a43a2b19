//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use prunekit::criteria::{score, Criterion, WeightHistory};
use prunekit::experiment::{run_experiment_in, run_lth_experiment_in, Checkpoint, ExperimentConfig};
use prunekit::granularity::{aggregate_scores, enumerate_blocks, parse_granularity, GranularitySpec};
use prunekit::harness::{fit, make_dataset, Callback, DatasetSpec, Model, TrainConfig, TrainState};
use prunekit::rng::{streams, Rng};
use prunekit::schedule::{eval_schedule, ScheduleKind, ScheduleSpec};
use prunekit::selection::{select_global, select_local, Context, LayerScores};
use prunekit::sparsifier::{run_lth, Sparsifier, SparsifyCallback, SparsifyPlan};
use prunekit::tensor::{apply_mask, InitScheme, Mask, Tensor};

type Check = Result<String, String>;

type Gate = fn() -> Check;

/// `(input shape, layer specs)`
type Arch<'a> = (Vec<usize>, Vec<&'a str>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)*));
        }
    };
}

// Reference values at t = k/10 for a final sparsity of 80, evaluated with
// 50-digit arithmetic and rounded to the nearest double.
const ITERATIVE: [f64; 11] = [0.0, 16.0, 16.0, 32.0, 32.0, 48.0, 48.0, 64.0, 64.0, 80.0, 80.0];
const GRADUAL: [f64; 11] = [
    0.0, 21.68, 39.04, 52.56, 62.72, 70.0, 74.88, 77.84, 79.36, 79.92, 80.0,
];
const ONE_CYCLE: [f64; 11] = [
    0.19787621034373692,
    0.7964112259608767,
    3.134308914644597,
    11.351892050519206,
    32.11575721437571,
    58.50430571695542,
    73.37078918421156,
    78.27574810744976,
    79.58778586241647,
    79.91811895558408,
    80.0,
];
const DSD: [f64; 11] = [
    0.0,
    7.639320225002103,
    27.639320225002102,
    52.3606797749979,
    72.36067977499789,
    80.0,
    72.36067977499789,
    52.3606797749979,
    27.639320225002102,
    7.639320225002103,
    0.0,
];

fn schedules() -> Check {
    let one_cycle = ScheduleKind::OneCycle {
        alpha: 14.0,
        beta: 6.0,
    };
    let cases = [
        (ScheduleKind::OneShot, [80.0; 11]),
        (ScheduleKind::Iterative { n_steps: 5 }, ITERATIVE),
        (ScheduleKind::Gradual, GRADUAL),
        (one_cycle.clone(), ONE_CYCLE),
        (ScheduleKind::Dsd, DSD),
    ];
    let mut worst: f64 = 0.0;
    for (kind, table) in &cases {
        for (k, &expected) in table.iter().enumerate() {
            let got = eval_schedule(kind, 80.0, k as f64 / 10.0);
            worst = worst.max((got - expected).abs());
            ensure!(
                (got - expected).abs() <= 1e-12,
                "{} at t={}: {got} vs {expected}",
                kind.name(),
                k as f64 / 10.0
            );
        }
    }
    ensure!(
        eval_schedule(&one_cycle, 80.0, 1.0) == 80.0,
        "one_cycle(1) is not exactly s"
    );
    ensure!(eval_schedule(&ScheduleKind::Dsd, 80.0, 0.0) == 0.0, "dsd(0) != 0");
    ensure!(eval_schedule(&ScheduleKind::Dsd, 80.0, 1.0) == 0.0, "dsd(1) != 0");
    let distinct: BTreeSet<u64> = (0..=10_000)
        .map(|i| eval_schedule(&ScheduleKind::Iterative { n_steps: 5 }, 80.0, i as f64 / 10_000.0).to_bits())
        .collect();
    ensure!(
        distinct.len() == 6,
        "iterative n=5 takes {} values",
        distinct.len()
    );
    Ok(format!("5 schedules x 11 points, max |err| {worst:.1e}"))
}

/// Pruned iff fewer than `k` entries precede it in (score, position) order,
/// counted pairwise rather than by sorting.
fn oracle_pruned(scores: &[f64], k: usize) -> Vec<bool> {
    (0..scores.len())
        .map(|i| {
            let before = (0..scores.len())
                .filter(|&j| scores[j] < scores[i] || (scores[j] == scores[i] && j < i))
                .count();
            before < k
        })
        .collect()
}

fn expected_bits(layer: &LayerScores, pruned: &[bool]) -> Vec<u8> {
    let mut bits = vec![1u8; layer.partition.total_elements()];
    for (b, members) in layer.partition.blocks().iter().enumerate() {
        if pruned[b] {
            for &i in members {
                bits[i] = 0;
            }
        }
    }
    bits
}

fn random_layer(id: usize, rng: &mut Rng) -> LayerScores {
    let shape = vec![1 + rng.below(8), 1 + rng.below(8)];
    let all = GranularitySpec::all(2).unwrap();
    let spec = &all[rng.below(all.len())];
    let partition = enumerate_blocks(spec, &shape).unwrap();
    let ties = rng.below(2) == 0;
    let scores = (0..partition.len())
        .map(|_| {
            if ties {
                rng.below(4) as f64
            } else {
                rng.standard_normal()
            }
        })
        .collect();
    LayerScores::new(id, partition, scores).unwrap()
}

fn selection() -> Check {
    let mut rng = Rng::new(2024);
    let mut blocks_seen = 0;
    for instance in 0..200 {
        let layers: Vec<LayerScores> = (0..1 + rng.below(4)).map(|i| random_layer(i, &mut rng)).collect();
        let s = rng.below(101);
        let local = select_local(&layers, s as f64).map_err(|e| e.to_string())?;
        for (l, m) in layers.iter().zip(&local) {
            let n = l.block_scores.len();
            blocks_seen += n;
            let want = expected_bits(l, &oracle_pruned(&l.block_scores, n * s / 100));
            ensure!(
                m.bits() == want.as_slice(),
                "instance {instance}: local mismatch at s={s}"
            );
        }
        let all: Vec<f64> = layers.iter().flat_map(|l| l.block_scores.clone()).collect();
        let pruned = oracle_pruned(&all, all.len() * s / 100);
        let global = select_global(&layers, s as f64).map_err(|e| e.to_string())?;
        let mut offset = 0;
        for (l, m) in layers.iter().zip(&global) {
            let n = l.block_scores.len();
            let want = expected_bits(l, &pruned[offset..offset + n]);
            offset += n;
            ensure!(
                m.bits() == want.as_slice(),
                "instance {instance}: global mismatch at s={s}"
            );
        }
    }
    Ok(format!(
        "200 instances, {blocks_seen} layer blocks, local and global bit-exact"
    ))
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}

fn partition() -> Check {
    let mut rng = Rng::new(16);
    let specs = GranularitySpec::all(4).map_err(|e| e.to_string())?;
    ensure!(specs.len() == 16, "{} rank-4 specs", specs.len());
    let mut masks = 0;
    for spec in &specs {
        let indexed = spec.indexed_axes();
        for _ in 0..20 {
            let shape = vec![
                1 + rng.below(4),
                1 + rng.below(4),
                1 + rng.below(3),
                1 + rng.below(3),
            ];
            let total: usize = shape.iter().product();
            let p = enumerate_blocks(spec, &shape).map_err(|e| e.to_string())?;
            let mut owner = vec![usize::MAX; total];
            for (b, members) in p.blocks().iter().enumerate() {
                for &i in members {
                    ensure!(
                        owner[i] == usize::MAX,
                        "{spec} {shape:?}: index {i} in two blocks"
                    );
                    owner[i] = b;
                }
            }
            ensure!(
                owner.iter().all(|&o| o != usize::MAX),
                "{spec} {shape:?}: not exhaustive"
            );
            let size: usize = spec.spanned_axes().iter().map(|&a| shape[a]).product();
            let count: usize = indexed.iter().map(|&a| shape[a]).product();
            ensure!(
                p.len() == count,
                "{spec} {shape:?}: {} blocks, expected {count}",
                p.len()
            );
            ensure!(
                p.blocks().iter().all(|b| b.len() == size),
                "{spec} {shape:?}: unequal blocks"
            );
            // same block exactly when indexed coordinates agree
            let key = |i: usize| -> Vec<usize> {
                let c = unravel(i, &shape);
                indexed.iter().map(|&a| c[a]).collect()
            };
            for i in 0..total {
                for j in 0..total {
                    ensure!(
                        (owner[i] == owner[j]) == (key(i) == key(j)),
                        "{spec} {shape:?}: {i},{j}"
                    );
                }
            }
            let w = Tensor::new(shape.clone(), (0..total).map(|_| rng.standard_normal()).collect()).unwrap();
            let block_scores = aggregate_scores(&w.map(f64::abs), &p).map_err(|e| e.to_string())?;
            let layer = LayerScores::new(0, p.clone(), block_scores).unwrap();
            let mask = &select_local(&[layer], rng.below(101) as f64).unwrap()[0];
            for members in p.blocks() {
                let first = mask.is_kept(members[0]);
                ensure!(
                    members.iter().all(|&i| mask.is_kept(i) == first),
                    "{spec} {shape:?}: impure mask"
                );
            }
            masks += 1;
        }
    }
    Ok(format!("16 specs x 20 shapes, {masks} masks block-pure"))
}

fn model(input: &[usize], arch: &[&str], seed: u64) -> Model {
    Model::from_specs(
        input,
        &common::specs(arch),
        InitScheme::Uniform,
        &mut Rng::with_stream(seed, streams::INIT),
    )
    .unwrap()
}

fn pruned_blocks(mask: &Mask, granularity: &str) -> (usize, usize) {
    let spec = parse_granularity(granularity, mask.shape().len()).unwrap();
    let p = enumerate_blocks(&spec, mask.shape()).unwrap();
    let pruned = p
        .blocks()
        .iter()
        .filter(|b| b.iter().all(|&i| !mask.is_kept(i)))
        .count();
    (pruned, p.len())
}

fn exactness() -> Check {
    let dense = (
        vec![6],
        vec!["dense(6,10)", "relu", "dense(10,7)", "relu", "dense(7,3)"],
    );
    let conv = (
        vec![3, 7, 7],
        vec![
            "conv2d(3,4,3,3)",
            "relu",
            "conv2d(4,5,2,2)",
            "relu",
            "conv2d(5,2,3,3)",
            "flatten",
        ],
    );
    let cases: Vec<(&Arch, Vec<&str>)> = vec![
        (&dense, vec!["weight", "row", "column"]),
        (
            &conv,
            vec![
                "weight",
                "row",
                "kernel",
                "filter",
                "shared_weight",
                "channel",
                "horizontal_slice",
                "shared_kernel",
            ],
        ),
    ];
    let mut checked = 0;
    for ((input, arch), grans) in &cases {
        for g in grans {
            for s in [0usize, 10, 33, 50, 90, 100] {
                for context in [Context::Local, Context::Global] {
                    let mut m = model(input, arch, 5);
                    Sparsifier::new(*g, context.clone(), Criterion::LargeFinal)
                        .prune_model(&mut m, s as f64, None, &mut Rng::new(0))
                        .map_err(|e| e.to_string())?;
                    let counts: Vec<(usize, usize)> =
                        m.masks().iter().map(|mk| pruned_blocks(mk, g)).collect();
                    if context == Context::Local {
                        for &(pruned, n) in &counts {
                            ensure!(pruned == n * s / 100, "{g} local s={s}: {pruned} of {n}");
                        }
                    } else {
                        let (pruned, n) = counts.iter().fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
                        ensure!(pruned == n * s / 100, "{g} global s={s}: {pruned} of {n}");
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} prunings exact at s in {{0,10,33,50,90,100}}"))
}

fn gradients() -> Check {
    let mut worst: f64 = 0.0;
    for arch in [common::MLP, common::CONV] {
        for seed in 0..10 {
            let (m, x, labels) = common::gradcheck_case(arch, seed);
            worst = worst.max(common::max_relative_error(&m, &x, &labels, 1e-5, 1e-12));
        }
    }
    ensure!(worst < 1e-5, "max relative error {worst:e}");
    Ok(format!("20 models, max relative error {worst:.1e}"))
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn dynamic_run() -> Check {
    let config = ExperimentConfig::load(&config_path("blobs-gradual.toml")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment_in(&config, dir.path()).map_err(|e| e.to_string())?;
    let logged: Vec<f64> = out.log.steps.iter().map(|r| r.model_sparsity).collect();
    ensure!(
        logged.windows(2).all(|w| w[1] >= w[0]),
        "logged sparsity decreases"
    );
    // 32 weights per layer, local context
    let quantum = 100.0 / 32.0;
    let last = *logged.last().unwrap();
    ensure!(
        (last - 50.0).abs() <= quantum + 1e-9,
        "last logged sparsity {last}"
    );
    let acc = out.log.final_valid_acc().unwrap();
    ensure!(acc >= 0.90, "pruned accuracy {acc}");

    let mut baseline = config.clone();
    baseline.sparsify = None;
    let dense =
        run_experiment_in(&baseline, tempfile::tempdir().unwrap().path()).map_err(|e| e.to_string())?;
    let dense_acc = dense.log.final_valid_acc().unwrap();
    ensure!(dense_acc >= 0.95, "dense accuracy {dense_acc}");
    Ok(format!(
        "last logged sparsity {last:.3}%, saved model {:.3}%, accuracy {acc:.3} (dense {dense_acc:.3})",
        out.checkpoint.model.sparsity() * 100.0
    ))
}

/// Checks every mask change seen at a hook: survivors equal the rewind
/// snapshot bit for bit, pruned positions are zero, and pruned sets only grow.
struct ResetSpy {
    w0: Vec<(Tensor, Vec<f64>)>,
    last: Vec<Mask>,
    resets: usize,
    errors: Vec<String>,
}

impl ResetSpy {
    fn observe(&mut self, model: &Model) {
        let masks = model.masks();
        if masks == self.last {
            return;
        }
        self.resets += 1;
        for (li, (p, (w, _))) in model.params().zip(&self.w0).enumerate() {
            let m = p.mask.as_ref().unwrap();
            for i in 0..m.len() {
                let want = if m.is_kept(i) { w.data()[i] } else { 0.0 };
                if p.weight.data()[i].to_bits() != want.to_bits() {
                    self.errors
                        .push(format!("reset {}: layer {li} index {i}", self.resets));
                }
                if !self.last.is_empty() && !self.last[li].is_kept(i) && m.is_kept(i) {
                    self.errors
                        .push(format!("reset {}: layer {li} index {i} regrew", self.resets));
                }
            }
        }
        self.last = masks;
    }
}

impl Callback for ResetSpy {
    fn on_epoch_begin(&mut self, s: &mut TrainState<'_>) -> prunekit::Result<()> {
        self.observe(s.model);
        Ok(())
    }
    fn on_step_end(&mut self, s: &mut TrainState<'_>) -> prunekit::Result<()> {
        self.observe(s.model);
        Ok(())
    }
}

const LTH_CONFIG: &str = r#"
name = "lth"
seed = 4

[model]
layers = ["dense(2,16)", "relu", "dense(16,2)"]

[dataset]
kind = "blobs2d"
n = 200
separation = 4.0

[train]
epochs = 10
batch_size = 16
learning_rate = 0.1

[sparsify]
sparsity = 80.0
granularity = "weight"
context = "global"
criterion = "large_final"
schedule = "iterative"
n_steps = 4
start_epoch = 1
end_epoch = 9
lth = true
save_tickets = true
"#;

fn lth() -> Check {
    let config = ExperimentConfig::from_toml_str(LTH_CONFIG).map_err(|e| e.to_string())?;
    let plan = config.plan().map_err(|e| e.to_string())?.unwrap();
    let mut m = config.build_model().map_err(|e| e.to_string())?;
    let data = make_dataset(&config.dataset, &mut Rng::with_stream(config.seed, streams::DATA)).unwrap();
    let (train, valid) = data.split().unwrap();
    let mut spy = ResetSpy {
        w0: m.snapshot(),
        last: m.masks(),
        resets: 0,
        errors: Vec::new(),
    };
    run_lth(
        &mut m,
        &config.train_config(),
        &plan,
        &train,
        &valid,
        &mut [&mut spy],
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        spy.errors.is_empty(),
        "{}",
        spy.errors[..spy.errors.len().min(3)].join("; ")
    );
    ensure!(spy.resets == 4, "{} mask changes observed", spy.resets);

    let dir = tempfile::tempdir().unwrap();
    let out = run_lth_experiment_in(&config, dir.path()).map_err(|e| e.to_string())?;
    ensure!(out.ticket_paths.len() == 4, "{} tickets", out.ticket_paths.len());
    // 64 weights compared jointly
    let quantum = 100.0 / 64.0;
    let mut got = Vec::new();
    for (path, target) in out.ticket_paths.iter().zip([20.0, 40.0, 60.0, 80.0]) {
        let ticket = Checkpoint::load(path).map_err(|e| e.to_string())?;
        let s = ticket.model.sparsity() * 100.0;
        ensure!(
            (s - target).abs() <= quantum + 1e-9,
            "{}: sparsity {s}",
            path.display()
        );
        for (p, (w, _)) in ticket.model.params().zip(&spy.w0) {
            ensure!(
                p.weight == apply_mask(w, p.mask.as_ref().unwrap()).unwrap(),
                "{}: survivors",
                path.display()
            );
        }
        got.push(format!("{s:.2}"));
    }
    Ok(format!(
        "4 resets bit-exact and nested, tickets at {}%",
        got.join("/")
    ))
}

/// Clones the model when the given epoch opens, before later callbacks run.
struct Capture {
    epoch: usize,
    model: Option<Model>,
}

impl Callback for Capture {
    fn on_epoch_begin(&mut self, s: &mut TrainState<'_>) -> prunekit::Result<()> {
        if s.epoch == self.epoch {
            self.model = Some(s.model.clone());
        }
        Ok(())
    }
}

fn static_dynamic() -> Check {
    let spec = DatasetSpec::Blobs2d {
        n: 120,
        separation: 4.0,
    };
    let (train, valid) = make_dataset(&spec, &mut Rng::with_stream(1, streams::DATA))
        .unwrap()
        .split()
        .unwrap();
    let patterns = DatasetSpec::Patterns8x8 { n: 60 };
    let (ptrain, pvalid) = make_dataset(&patterns, &mut Rng::with_stream(1, streams::DATA))
        .unwrap()
        .split()
        .unwrap();
    let mlp = (
        vec![2],
        vec!["dense(2,8)", "relu", "dense(8,6)", "relu", "dense(6,2)"],
        vec!["weight", "row", "column"],
    );
    let conv = (
        vec![1, 8, 8],
        vec!["conv2d(1,3,3,3)", "relu", "conv2d(3,2,6,6)", "flatten"],
        vec!["weight", "kernel", "filter", "channel", "shared_kernel"],
    );
    let epochs = 4;
    let config = TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: 0.05,
        momentum: 0.9,
        seed: 1,
    };
    let mut runs = 0;
    for (input, arch, grans) in [&mlp, &conv] {
        let (tr, va) = if input.len() == 1 {
            (&train, &valid)
        } else {
            (&ptrain, &pvalid)
        };
        for g in grans {
            for context in [Context::Local, Context::Global] {
                for criterion in Criterion::ALL {
                    let schedule = ScheduleSpec::new(ScheduleKind::OneShot, 60.0, epochs - 1, epochs);
                    let plan = SparsifyPlan::new(*g, context.clone(), criterion, schedule);
                    let mut m = model(input, arch, 1);
                    let w0 = m.snapshot();
                    let mut capture = Capture {
                        epoch: epochs - 1,
                        model: None,
                    };
                    let mut cb = SparsifyCallback::new(plan, Rng::with_stream(1, streams::CRITERIA));
                    fit(&mut m, &config, tr, va, &mut [&mut capture, &mut cb]).map_err(|e| e.to_string())?;

                    let mut before = capture.model.unwrap();
                    let histories: Vec<WeightHistory> =
                        w0.into_iter().map(|(w, _)| WeightHistory::new(w, 0)).collect();
                    let masks = Sparsifier::new(*g, context.clone(), criterion)
                        .prune_model(
                            &mut before,
                            60.0,
                            Some(&histories),
                            &mut Rng::with_stream(1, streams::CRITERIA),
                        )
                        .map_err(|e| e.to_string())?;
                    ensure!(
                        masks == m.masks(),
                        "{g}/{}/{criterion}: masks differ",
                        context.name()
                    );
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("{runs} runs, dynamic masks equal static masks"))
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((
            entry.strip_prefix(dir).unwrap().to_path_buf(),
            std::fs::read(&entry).unwrap(),
        ));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn determinism() -> Check {
    let mut compared = 0;
    for name in [
        "blobs-gradual.toml",
        "blobs-lth.toml",
        "patterns-shared-kernel.toml",
    ] {
        let config = ExperimentConfig::load(&config_path(name)).map_err(|e| e.to_string())?;
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            if config.sparsify.as_ref().is_some_and(|s| s.lth) {
                run_lth_experiment_in(&config, dir.path()).unwrap();
            } else {
                run_experiment_in(&config, dir.path()).unwrap();
            }
            files(dir.path())
        };
        let (a, b) = (run(), run());
        ensure!(
            a.iter().any(|(p, _)| p.ends_with("metrics.csv")),
            "{name}: no metrics.csv"
        );
        ensure!(
            a.iter().any(|(p, _)| p.ends_with("checkpoint.json")),
            "{name}: no checkpoint"
        );
        ensure!(a.len() == b.len(), "{name}: file sets differ");
        for ((pa, da), (pb, db)) in a.iter().zip(&b) {
            ensure!(pa == pb && da == db, "{name}: {} differs", pa.display());
        }
        compared += a.len();
    }
    Ok(format!(
        "3 configs run twice, {compared} output files byte-identical"
    ))
}

fn order(t: &Tensor) -> Vec<usize> {
    let d = t.data();
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    idx
}

fn criteria() -> Check {
    let mut rng = Rng::new(10);
    let mut comparisons = 0;
    for _ in 0..50 {
        let draw = |rng: &mut Rng| {
            Tensor::new(vec![6, 5], (0..30).map(|_| rng.standard_normal()).collect()).unwrap()
        };
        let (wf, wi) = (draw(&mut rng), draw(&mut rng));
        for criterion in [
            Criterion::LargeFinal,
            Criterion::MagnitudeIncrease,
            Criterion::Movement,
        ] {
            let base = order(&score(criterion, &wf, Some(&wi), None).unwrap());
            for c in [1e-3, 0.5, 3.0, 7.25, 1e3] {
                let scaled = score(criterion, &wf.scale(c), Some(&wi.scale(c)), None).unwrap();
                ensure!(
                    order(&scaled) == base,
                    "{criterion}: order changes under scale {c}"
                );
                comparisons += 1;
            }
        }
    }

    let template = model(&[10], &["dense(10,10)"], 0);
    let mut kept = [0usize; 100];
    for seed in 0..1000 {
        let mut m = template.clone();
        Sparsifier::new("weight", Context::Local, Criterion::Random)
            .prune_model(&mut m, 50.0, None, &mut Rng::with_stream(seed, streams::CRITERIA))
            .map_err(|e| e.to_string())?;
        let mask = &m.masks()[0];
        for (i, k) in kept.iter_mut().enumerate() {
            *k += mask.is_kept(i) as usize;
        }
    }
    let lo = *kept.iter().min().unwrap() as f64 / 1000.0;
    let hi = *kept.iter().max().unwrap() as f64 / 1000.0;
    ensure!(
        lo >= 0.40 && hi <= 0.60,
        "random keep frequency spans [{lo}, {hi}]"
    );
    Ok(format!(
        "{comparisons} scaled orderings unchanged, random keep frequency in [{lo:.3}, {hi:.3}]"
    ))
}

fn main() {
    let criteria: [(&str, Gate); 10] = [
        ("schedule closed forms", schedules),
        ("selection oracle equivalence", selection),
        ("granularity partition", partition),
        ("sparsity exactness", exactness),
        ("gradient correctness", gradients),
        ("dynamic pruning run", dynamic_run),
        ("lottery ticket semantics", lth),
        ("static/dynamic consistency", static_dynamic),
        ("determinism", determinism),
        ("criterion properties", criteria),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
