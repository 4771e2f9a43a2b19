use crate::criteria::{Criterion, WeightHistory};
use crate::error::{Error, Result};
use crate::granularity::GranularityName;
use crate::harness::{Callback, Model, TrainState};
use crate::rng::Rng;
use crate::schedule::{current_target, eval_schedule, update_boundaries, ProgressClock, ScheduleSpec};
use crate::selection::Context;
use crate::sparsifier::lth::Ticket;
use crate::sparsifier::Sparsifier;
use crate::tensor::{apply_mask, Tensor};

/// Everything the training-time pruner needs to know.
#[derive(Debug, Clone)]
pub struct SparsifyPlan {
    pub granularity: GranularityName,
    /// For `Context::PerLayer` the list holds each layer's final sparsity and
    /// `schedule.final_sparsity` is not used for selection.
    pub context: Context,
    pub criterion: Criterion,
    pub schedule: ScheduleSpec,
    /// Rewind surviving weights to the snapshot after every pruning round.
    pub lth: bool,
    /// Epoch whose start is snapshotted for rewinding.
    pub rewind_epoch: usize,
    /// Rewind to the snapshot (under the final masks) once training ends.
    pub reset_end: bool,
    pub save_tickets: bool,
}

impl SparsifyPlan {
    pub fn new(
        granularity: impl Into<GranularityName>,
        context: Context,
        criterion: Criterion,
        schedule: ScheduleSpec,
    ) -> Self {
        Self {
            granularity: granularity.into(),
            context,
            criterion,
            schedule,
            lth: false,
            rewind_epoch: 0,
            reset_end: false,
            save_tickets: false,
        }
    }

    pub fn needs_snapshot(&self) -> bool {
        self.lth || self.reset_end
    }

    pub fn sparsifier(&self) -> Sparsifier {
        Sparsifier::new(self.granularity.clone(), self.context.clone(), self.criterion)
    }

    pub fn validate(&self, model: &Model, total_epochs: usize) -> Result<()> {
        self.schedule.validate(total_epochs)?;
        self.sparsifier().check_model(model)?;
        if self.lth && self.rewind_epoch >= self.schedule.start_epoch {
            return Err(Error::invalid(format!(
                "rewind_epoch {} must precede the pruning window start {} so weights are saved before the first round",
                self.rewind_epoch, self.schedule.start_epoch
            )));
        }
        if self.reset_end && self.rewind_epoch >= total_epochs {
            return Err(Error::invalid(format!(
                "rewind_epoch {} is past the last epoch",
                self.rewind_epoch
            )));
        }
        Ok(())
    }

    /// Per-layer (or uniform) sparsity targets in effect at `clock`.
    fn targets_at(&self, clock: &ProgressClock) -> Result<Targets> {
        let uniform = current_target(clock, &self.schedule)?;
        Ok(match &self.context {
            Context::PerLayer(finals) => {
                let before = clock.current_step < self.schedule.start_epoch * clock.steps_per_epoch;
                let t = crate::schedule::normalized_t(clock, &self.schedule)?;
                Targets::PerLayer(
                    finals
                        .iter()
                        .map(|&s| {
                            if before {
                                0.0
                            } else {
                                eval_schedule(&self.schedule.kind, s, t)
                            }
                        })
                        .collect(),
                )
            }
            _ => Targets::Uniform(uniform),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Targets {
    Uniform(f64),
    PerLayer(Vec<f64>),
}

impl Targets {
    fn is_zero(&self) -> bool {
        match self {
            Targets::Uniform(s) => *s == 0.0,
            Targets::PerLayer(list) => list.iter().all(|&s| s == 0.0),
        }
    }

    /// Scalar summary for logging, weighted by layer size in the per-layer case.
    fn summary(&self, model: &Model) -> f64 {
        match self {
            Targets::Uniform(s) => *s,
            Targets::PerLayer(list) => {
                let sizes: Vec<usize> = model.params().map(|p| p.weight.len()).collect();
                let total: usize = sizes.iter().sum();
                list.iter().zip(&sizes).map(|(s, &n)| s * n as f64).sum::<f64>() / total as f64
            }
        }
    }
}

/// Pruning state carried across a training run.
#[derive(Debug, Clone, Default)]
pub struct MaskState {
    pub histories: Vec<WeightHistory>,
    /// Weight and bias of every prunable layer at the rewind point.
    pub rewind_snapshot: Option<Vec<(Tensor, Vec<f64>)>>,
    pub round_counter: usize,
}

/// One pruning round: a mask update whose target differed from the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub epoch: usize,
    /// Step boundary (steps completed) at which the round happened.
    pub step: usize,
    pub target_sparsity: f64,
    /// Fraction of prunable weights masked after the round, in percent.
    pub model_sparsity: f64,
    /// Validation accuracy reached under this round's mask, measured right
    /// before the next round (or at the end of training).
    pub accuracy: Option<f64>,
}

/// Training callback that drives pruning according to a [`SparsifyPlan`].
///
/// Mask-update events fall on the step boundaries of the schedule window.
/// At each event the current target is computed; when it differs from the
/// target of the previous round, masks are recomputed from scratch, weight
/// histories are refreshed, and with `lth` the surviving weights are rewound.
/// After every optimizer step the masks are re-applied so pruned weights stay
/// exactly zero.
pub struct SparsifyCallback {
    plan: SparsifyPlan,
    rng: Rng,
    state: MaskState,
    boundaries: Vec<usize>,
    last_targets: Option<Targets>,
    rounds: Vec<RoundRecord>,
    tickets: Vec<Ticket>,
}

impl SparsifyCallback {
    pub fn new(plan: SparsifyPlan, rng: Rng) -> Self {
        Self {
            plan,
            rng,
            state: MaskState::default(),
            boundaries: Vec::new(),
            last_targets: None,
            rounds: Vec::new(),
            tickets: Vec::new(),
        }
    }

    pub fn plan(&self) -> &SparsifyPlan {
        &self.plan
    }

    pub fn mask_state(&self) -> &MaskState {
        &self.state
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn tickets(&self) -> &[Ticket] {
        &self.tickets
    }

    pub fn into_parts(self) -> (MaskState, Vec<RoundRecord>, Vec<Ticket>) {
        (self.state, self.rounds, self.tickets)
    }

    fn take_snapshot(&mut self, model: &Model) {
        if self.plan.needs_snapshot() && self.state.rewind_snapshot.is_none() {
            self.state.rewind_snapshot = Some(model.snapshot());
        }
    }

    fn rewind(&self, model: &mut Model) -> Result<()> {
        let snapshot = self
            .state
            .rewind_snapshot
            .as_ref()
            .ok_or_else(|| Error::Aborted("rewind requested before a snapshot was taken".into()))?;
        for (p, (w, b)) in model.params_mut().zip(snapshot) {
            p.weight = match &p.mask {
                Some(m) => apply_mask(w, m)?,
                None => w.clone(),
            };
            p.bias = b.clone();
        }
        Ok(())
    }

    fn finish_round_accuracy(&mut self, state: &TrainState<'_>) -> Result<()> {
        if let Some(last) = self.rounds.last_mut() {
            if last.accuracy.is_none() {
                last.accuracy = Some(state.model.evaluate(state.valid)?.1);
            }
        }
        Ok(())
    }

    /// Handles the mask-update event at step boundary `b`, if there is one.
    fn process_boundary(&mut self, b: usize, state: &mut TrainState<'_>) -> Result<()> {
        if self.boundaries.binary_search(&b).is_err() {
            return Ok(());
        }
        let clock = ProgressClock {
            current_step: b,
            steps_per_epoch: state.steps_per_epoch,
            total_epochs: state.total_epochs,
        };
        let targets = self.plan.targets_at(&clock)?;
        state.target_sparsity = targets.summary(state.model);
        let unchanged = match &self.last_targets {
            Some(last) => *last == targets,
            None => targets.is_zero(),
        };
        if unchanged {
            return Ok(());
        }
        self.finish_round_accuracy(state)?;

        let mut sparsifier = self.plan.sparsifier();
        let uniform = match &targets {
            Targets::Uniform(s) => *s,
            Targets::PerLayer(list) => {
                sparsifier.context = Context::PerLayer(list.clone());
                0.0
            }
        };
        let histories = self
            .plan
            .criterion
            .needs_history()
            .then_some(self.state.histories.as_slice());
        sparsifier.prune_model(state.model, uniform, histories, &mut self.rng)?;
        for (h, p) in self.state.histories.iter_mut().zip(state.model.params()) {
            h.update(&p.weight, b)?;
        }
        if self.plan.lth {
            self.rewind(state.model)?;
        }

        self.state.round_counter += 1;
        self.last_targets = Some(targets);
        self.rounds.push(RoundRecord {
            round: self.state.round_counter,
            epoch: b / state.steps_per_epoch,
            step: b,
            target_sparsity: state.target_sparsity,
            model_sparsity: state.model.sparsity() * 100.0,
            accuracy: None,
        });
        if self.plan.lth && self.plan.save_tickets {
            self.tickets.push(Ticket {
                round: self.state.round_counter,
                target_sparsity: state.target_sparsity,
                model: state.model.clone(),
                rewind_snapshot: self.state.rewind_snapshot.clone().unwrap_or_default(),
            });
        }
        Ok(())
    }
}

impl Callback for SparsifyCallback {
    fn on_train_begin(&mut self, state: &mut TrainState<'_>) -> Result<()> {
        self.plan.validate(state.model, state.total_epochs)?;
        self.state = MaskState {
            histories: state
                .model
                .params()
                .map(|p| WeightHistory::new(p.weight.clone(), 0))
                .collect(),
            rewind_snapshot: None,
            round_counter: 0,
        };
        self.boundaries = update_boundaries(&self.plan.schedule, state.steps_per_epoch);
        self.last_targets = None;
        self.rounds.clear();
        self.tickets.clear();
        if self.plan.rewind_epoch == 0 {
            self.take_snapshot(state.model);
        }
        Ok(())
    }

    fn on_epoch_begin(&mut self, state: &mut TrainState<'_>) -> Result<()> {
        if state.epoch == self.plan.rewind_epoch {
            self.take_snapshot(state.model);
        }
        self.process_boundary(state.epoch * state.steps_per_epoch, state)
    }

    fn on_step_end(&mut self, state: &mut TrainState<'_>) -> Result<()> {
        state.model.reapply_masks();
        let b = state.global_step;
        if !b.is_multiple_of(state.steps_per_epoch) {
            self.process_boundary(b, state)?;
        }
        Ok(())
    }

    fn on_train_end(&mut self, state: &mut TrainState<'_>) -> Result<()> {
        self.process_boundary(state.total_steps(), state)?;
        self.finish_round_accuracy(state)?;
        if self.plan.reset_end {
            self.rewind(state.model)?;
        }
        Ok(())
    }
}
