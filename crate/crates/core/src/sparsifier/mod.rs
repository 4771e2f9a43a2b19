//! Mask lifecycle: static pruning, the training-time callback, and lottery
//! ticket experiments.
//!
//! Masks live on the model's prunable layers. Pruning never changes tensor
//! shapes; it installs a mask and zeroes the weights it removes.

mod callback;
mod lth;

pub use callback::{MaskState, RoundRecord, SparsifyCallback, SparsifyPlan};
pub use lth::{run_lth, LthOutcome, Ticket};

use crate::criteria::{score, Criterion, WeightHistory};
use crate::error::{Error, Result};
use crate::granularity::{aggregate_scores, enumerate_blocks, GranularityName};
use crate::harness::{Layer, Model};
use crate::rng::Rng;
use crate::selection::{select_global, select_local, select_per_layer, Context, LayerScores};
use crate::tensor::Mask;

/// The static pruner: how (granularity), where (context) and what (criterion).
#[derive(Debug, Clone, PartialEq)]
pub struct Sparsifier {
    pub granularity: GranularityName,
    pub context: Context,
    pub criterion: Criterion,
}

impl Sparsifier {
    pub fn new(granularity: impl Into<GranularityName>, context: Context, criterion: Criterion) -> Self {
        Self {
            granularity: granularity.into(),
            context,
            criterion,
        }
    }

    /// Checks that the plan applies to every prunable layer of `model`.
    pub fn check_model(&self, model: &Model) -> Result<()> {
        let n = model.prunable_count();
        if n == 0 {
            return Err(Error::invalid("model has no prunable layers"));
        }
        for p in model.params() {
            self.granularity.resolve(p.weight.rank())?;
        }
        if let Context::PerLayer(list) = &self.context {
            if list.len() != n {
                return Err(Error::invalid(format!(
                    "per-layer sparsity list has {} entries but the model has {n} prunable layers",
                    list.len()
                )));
            }
            if let Some(bad) = list.iter().find(|s| !(0.0..=100.0).contains(*s)) {
                return Err(Error::invalid(format!(
                    "per-layer sparsity {bad} is outside [0, 100]"
                )));
            }
        }
        Ok(())
    }

    fn layer_scores(
        &self,
        model: &Model,
        histories: Option<&[WeightHistory]>,
        rng: &mut Rng,
    ) -> Result<Vec<LayerScores>> {
        if let Some(h) = histories {
            if h.len() != model.prunable_count() {
                return Err(Error::invalid(format!(
                    "{} weight histories for {} prunable layers",
                    h.len(),
                    model.prunable_count()
                )));
            }
        }
        model
            .params()
            .enumerate()
            .map(|(l, p)| {
                let spec = self.granularity.resolve(p.weight.rank())?;
                let partition = enumerate_blocks(&spec, p.weight.shape())?;
                let wi = histories.map(|h| h[l].values());
                let scores = score(self.criterion, &p.weight, wi, Some(rng))?;
                let block_scores = aggregate_scores(&scores, &partition)?;
                LayerScores::new(l, partition, block_scores)
            })
            .collect()
    }

    /// Recomputes every prunable layer's mask from scratch and applies it.
    ///
    /// `sparsity` is a percentage for local and global context; a per-layer
    /// context carries its own targets and ignores it.
    pub fn prune_model(
        &self,
        model: &mut Model,
        sparsity: f64,
        histories: Option<&[WeightHistory]>,
        rng: &mut Rng,
    ) -> Result<Vec<Mask>> {
        self.check_model(model)?;
        if self.criterion.needs_history() && histories.is_none() {
            return Err(Error::invalid(format!(
                "criterion '{}' requires weight history",
                self.criterion
            )));
        }
        let scores = self.layer_scores(model, histories, rng)?;
        let masks = match &self.context {
            Context::Local => select_local(&scores, sparsity)?,
            Context::Global => select_global(&scores, sparsity)?,
            Context::PerLayer(list) => select_per_layer(&scores, list)?,
        };
        for (p, m) in model.params_mut().zip(&masks) {
            p.set_mask(m.clone())?;
        }
        Ok(masks)
    }
}

/// Prunes a single dense or conv layer in isolation.
pub fn prune_layer(
    layer: &mut Layer,
    sparsity: f64,
    granularity: &GranularityName,
    criterion: Criterion,
    history: Option<&WeightHistory>,
    rng: &mut Rng,
) -> Result<Mask> {
    let name = layer.spec();
    let param = layer
        .param_mut()
        .ok_or_else(|| Error::invalid(format!("layer '{name}' has no prunable weights")))?;
    let spec = granularity.resolve(param.weight.rank())?;
    let partition = enumerate_blocks(&spec, param.weight.shape())?;
    let scores = score(
        criterion,
        &param.weight,
        history.map(WeightHistory::values),
        Some(rng),
    )?;
    let block_scores = aggregate_scores(&scores, &partition)?;
    let layer_scores = LayerScores::new(0, partition, block_scores)?;
    let mask = select_local(std::slice::from_ref(&layer_scores), sparsity)?
        .pop()
        .expect("one layer in, one mask out");
    param.set_mask(mask.clone())?;
    Ok(mask)
}
