//! Mini-batch SGD training loop with synchronous callback hooks.
//!
//! Hook order within a run:
//!
//! ```text
//! on_train_begin
//!   on_epoch_begin(0)  on_step_end × steps_per_epoch  on_epoch_end(0)
//!   ...
//! on_train_end
//! ```
//!
//! Callbacks fire in the order they were passed to [`fit`]. Any callback
//! error aborts the run; the model is trained in place, so the caller still
//! holds the state reached at the point of failure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::data::Dataset;
use crate::harness::model::{accuracy, Gradients, Model};
use crate::rng::{streams, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be a positive number"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("train.momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.batch_size)
    }
}

/// One row per optimizer step, describing the state the step trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    /// Zero-based global step index.
    pub step: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// Percent of prunable weights masked out.
    pub model_sparsity: f64,
    /// Percent.
    pub target_sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub valid_loss: f64,
    pub valid_acc: f64,
    /// Percent.
    pub model_sparsity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricLog {
    pub steps: Vec<MetricRow>,
    pub epochs: Vec<EpochSummary>,
}

impl MetricLog {
    pub fn final_valid_acc(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.valid_acc)
    }
}

/// Mutable training state handed to every hook.
pub struct TrainState<'a> {
    pub model: &'a mut Model,
    pub train: &'a Dataset,
    pub valid: &'a Dataset,
    pub epoch: usize,
    /// Steps completed so far.
    pub global_step: usize,
    pub steps_per_epoch: usize,
    pub total_epochs: usize,
    /// Loss and accuracy of the most recent batch.
    pub batch_loss: f64,
    pub batch_acc: f64,
    /// Sparsity a pruning callback is currently aiming for, in percent.
    pub target_sparsity: f64,
}

impl TrainState<'_> {
    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch * self.total_epochs
    }
}

/// Training hooks. Every method defaults to a no-op.
pub trait Callback {
    fn on_train_begin(&mut self, _state: &mut TrainState<'_>) -> Result<()> {
        Ok(())
    }

    fn on_epoch_begin(&mut self, _state: &mut TrainState<'_>) -> Result<()> {
        Ok(())
    }

    /// Fires after the optimizer update of each step.
    fn on_step_end(&mut self, _state: &mut TrainState<'_>) -> Result<()> {
        Ok(())
    }

    fn on_epoch_end(&mut self, _state: &mut TrainState<'_>) -> Result<()> {
        Ok(())
    }

    fn on_train_end(&mut self, _state: &mut TrainState<'_>) -> Result<()> {
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `w ← w − lr·v`.
#[derive(Debug, Clone, Default)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Gradients) -> Result<()> {
        let layers = model.layers_mut();
        if grads.len() != layers.len() {
            return Err(Error::invalid(format!(
                "{} gradient entries for {} layers",
                grads.len(),
                layers.len()
            )));
        }
        if self.velocity.len() != layers.len() {
            self.velocity = vec![None; layers.len()];
        }
        for ((layer, grad), vel) in layers.iter_mut().zip(grads).zip(&mut self.velocity) {
            let (Some(param), Some(grad)) = (layer.param_mut(), grad) else {
                continue;
            };
            param.weight.ensure_same_shape(grad.weight.shape())?;
            let (vw, vb) =
                vel.get_or_insert_with(|| (vec![0.0; grad.weight.len()], vec![0.0; grad.bias.len()]));
            let update = |w: &mut [f64], v: &mut [f64], g: &[f64]| {
                for ((w, v), g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = self.momentum * *v + g;
                    *w -= self.lr * *v;
                }
            };
            update(param.weight.data_mut(), vw, grad.weight.data());
            update(&mut param.bias, vb, &grad.bias);
        }
        Ok(())
    }
}

/// Trains `model` in place.
pub fn fit(
    model: &mut Model,
    config: &TrainConfig,
    train: &Dataset,
    valid: &Dataset,
    callbacks: &mut [&mut dyn Callback],
) -> Result<MetricLog> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let steps_per_epoch = config.steps_per_epoch(train.len());
    let mut shuffle_rng = Rng::with_stream(config.seed, streams::SHUFFLE);
    let mut sgd = Sgd::new(config.learning_rate, config.momentum);
    let mut log = MetricLog::default();
    let mut state = TrainState {
        model,
        train,
        valid,
        epoch: 0,
        global_step: 0,
        steps_per_epoch,
        total_epochs: config.epochs,
        batch_loss: 0.0,
        batch_acc: 0.0,
        target_sparsity: 0.0,
    };

    for cb in callbacks.iter_mut() {
        cb.on_train_begin(&mut state)?;
    }
    for epoch in 0..config.epochs {
        state.epoch = epoch;
        for cb in callbacks.iter_mut() {
            cb.on_epoch_begin(&mut state)?;
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = train.batch(chunk)?;
            let (loss, grads, logits) = state.model.forward_backward(&x, &y)?;
            sgd.step(state.model, &grads)?;
            state.batch_loss = loss;
            state.batch_acc = accuracy(&logits, &y);
            log.steps.push(MetricRow {
                epoch,
                step: state.global_step,
                train_loss: loss,
                train_acc: state.batch_acc,
                model_sparsity: state.model.sparsity() * 100.0,
                target_sparsity: state.target_sparsity,
            });
            state.global_step += 1;
            for cb in callbacks.iter_mut() {
                cb.on_step_end(&mut state)?;
            }
        }
        let (train_loss, train_acc) = state.model.evaluate(train)?;
        let (valid_loss, valid_acc) = state.model.evaluate(valid)?;
        log.epochs.push(EpochSummary {
            epoch,
            train_loss,
            train_acc,
            valid_loss,
            valid_acc,
            model_sparsity: state.model.sparsity() * 100.0,
        });
        for cb in callbacks.iter_mut() {
            cb.on_epoch_end(&mut state)?;
        }
    }
    for cb in callbacks.iter_mut() {
        cb.on_train_end(&mut state)?;
    }
    Ok(log)
}
