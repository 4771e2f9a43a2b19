//! Lottery ticket experiments: train, prune, rewind the survivors, repeat.

use crate::error::{Error, Result};
use crate::harness::{fit, Callback, Dataset, MetricLog, Model, TrainConfig};
use crate::rng::{streams, Rng};
use crate::sparsifier::callback::{RoundRecord, SparsifyCallback, SparsifyPlan};
use crate::tensor::Tensor;

/// Sparse subnetwork saved right after a pruning round's rewind: the model
/// carries the round's masks and the weights `snapshot ⊙ mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ticket {
    pub round: usize,
    pub target_sparsity: f64,
    pub model: Model,
    pub rewind_snapshot: Vec<(Tensor, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct LthOutcome {
    pub log: MetricLog,
    pub rounds: Vec<RoundRecord>,
    pub tickets: Vec<Ticket>,
}

/// Runs a lottery ticket experiment in place on `model`.
///
/// Each mask update that raises the target is one pruning round. With
/// `rewind_epoch = 0` survivors return to their initial values; a later
/// rewind epoch gives the rewinding variant. Tickets are always collected.
pub fn run_lth(
    model: &mut Model,
    config: &TrainConfig,
    plan: &SparsifyPlan,
    train: &Dataset,
    valid: &Dataset,
    extra_callbacks: &mut [&mut dyn Callback],
) -> Result<LthOutcome> {
    if !plan.lth {
        return Err(Error::invalid(
            "lottery ticket run requested but plan.lth is not set",
        ));
    }
    let mut plan = plan.clone();
    plan.save_tickets = true;
    plan.validate(model, config.epochs)?;
    let mut sparsify = SparsifyCallback::new(plan, Rng::with_stream(config.seed, streams::CRITERIA));
    let log = {
        let mut callbacks: Vec<&mut dyn Callback> = vec![&mut sparsify];
        callbacks.extend(extra_callbacks.iter_mut().map(|c| &mut **c as &mut dyn Callback));
        fit(model, config, train, valid, &mut callbacks)?
    };
    let (_, rounds, tickets) = sparsify.into_parts();
    Ok(LthOutcome { log, rounds, tickets })
}
