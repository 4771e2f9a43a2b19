//! Turning block scores into masks, either per layer or across the model.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::granularity::BlockPartition;
use crate::tensor::Mask;

/// Where block scores are compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    Local,
    Global,
    /// One sparsity percentage per prunable layer, in model order.
    PerLayer(Vec<f64>),
}

impl Context {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "local" => Ok(Context::Local),
            "global" => Ok(Context::Global),
            other => Err(Error::invalid(format!(
                "unknown context '{other}' (expected 'local' or 'global')"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Context::Local => "local",
            Context::Global => "global",
            Context::PerLayer(_) => "per_layer",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerScores {
    pub layer_id: usize,
    pub partition: BlockPartition,
    pub block_scores: Vec<f64>,
}

impl LayerScores {
    pub fn new(layer_id: usize, partition: BlockPartition, block_scores: Vec<f64>) -> Result<Self> {
        if block_scores.len() != partition.len() {
            return Err(Error::invalid(format!(
                "layer {layer_id}: {} block scores for {} blocks",
                block_scores.len(),
                partition.len()
            )));
        }
        if let Some(i) = block_scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!(
                "layer {layer_id}: non-finite score for block {i}"
            )));
        }
        Ok(Self {
            layer_id,
            partition,
            block_scores,
        })
    }
}

fn check_sparsity(sparsity: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&sparsity) {
        return Err(Error::invalid(format!("sparsity {sparsity} is outside [0, 100]")));
    }
    Ok(())
}

/// Number of blocks to prune: `floor(n_blocks * sparsity / 100)`.
///
/// A guard of 1e-9 block absorbs representation error in schedule outputs
/// such as `59.99999999999999`, which would otherwise lose a whole block.
pub fn pruned_count(n_blocks: usize, sparsity: f64) -> Result<usize> {
    check_sparsity(sparsity)?;
    let exact = n_blocks as f64 * sparsity / 100.0;
    Ok(((exact + 1e-9).floor() as usize).min(n_blocks))
}

/// Ascending by score, ties by position.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

fn mask_from_pruned(partition: &BlockPartition, pruned: &[bool]) -> Result<Mask> {
    let mut mask = Mask::ones(partition.shape())?;
    for (block, members) in partition.blocks().iter().enumerate() {
        if pruned[block] {
            for &i in members {
                mask.set(i, false);
            }
        }
    }
    Ok(mask)
}

fn select_one(layer: &LayerScores, sparsity: f64) -> Result<Mask> {
    let k = pruned_count(layer.block_scores.len(), sparsity)?;
    let mut pruned = vec![false; layer.block_scores.len()];
    for &b in ascending(&layer.block_scores).iter().take(k) {
        pruned[b] = true;
    }
    mask_from_pruned(&layer.partition, &pruned)
}

/// Each layer prunes its own lowest-scoring blocks.
pub fn select_local(layers: &[LayerScores], sparsity: f64) -> Result<Vec<Mask>> {
    check_sparsity(sparsity)?;
    layers.iter().map(|l| select_one(l, sparsity)).collect()
}

/// Prunes the lowest-scoring blocks of the whole model, compared jointly.
pub fn select_global(layers: &[LayerScores], sparsity: f64) -> Result<Vec<Mask>> {
    let all: Vec<f64> = layers
        .iter()
        .flat_map(|l| l.block_scores.iter().copied())
        .collect();
    let k = pruned_count(all.len(), sparsity)?;
    let mut pruned = vec![false; all.len()];
    for &b in ascending(&all).iter().take(k) {
        pruned[b] = true;
    }
    let mut offset = 0;
    layers
        .iter()
        .map(|l| {
            let n = l.block_scores.len();
            let mask = mask_from_pruned(&l.partition, &pruned[offset..offset + n]);
            offset += n;
            mask
        })
        .collect()
}

pub fn select_per_layer(layers: &[LayerScores], sparsities: &[f64]) -> Result<Vec<Mask>> {
    if sparsities.len() != layers.len() {
        return Err(Error::invalid(format!(
            "per-layer sparsity list has {} entries but there are {} prunable layers",
            sparsities.len(),
            layers.len()
        )));
    }
    layers
        .iter()
        .zip(sparsities)
        .map(|(l, &s)| select_one(l, s))
        .collect()
}
